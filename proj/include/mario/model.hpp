#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mario/prompt.hpp"
#include "mario/tokenizer.hpp"

namespace mario {

template <class S>
using BasicMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using BasicRowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;
using Matrix = BasicMatrix<double>;
using RowVector = BasicRowVector<double>;
/// Averaged prompt-encoder hidden state fed to the decoder's cross-attention.
using ContextVector = RowVector;

/// Generator: causal decoder with cross-attention on the prompt context plus
/// a bidirectional prompt encoder. Infill: bidirectional masked-token model.
enum class ModelKind { Generator, Infill };

struct ModelConfig {
  ModelKind kind = ModelKind::Generator;
  int vocab_size = Vocab::kNumBase;
  int embed_dim = 64;
  int num_layers = 2;
  int num_heads = 4;
  /// Tokens; 700 = 50 columns of 14 tiles.
  int context_len = 14 * kWindowColumns;
  int ffn_mult = 4;
  int prompt_vocab_size = kPromptVocabSize;
  int prompt_layers = 1;
  int prompt_context = 32;
  std::uint64_t seed = 0;

  /// Throws BadConfig.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <class S>
struct BasicLayerNormParams {
  BasicMatrix<S> gain;  // 1 x d
  BasicMatrix<S> bias;  // 1 x d
};

template <class S>
struct BasicLinearParams {
  BasicMatrix<S> weight;  // in x out
  BasicMatrix<S> bias;    // 1 x out
};

template <class S>
struct BasicBlockParams {
  BasicLayerNormParams<S> self_norm;
  BasicLinearParams<S> qkv;
  BasicLinearParams<S> self_out;
  // Cross-attention tensors stay empty in stacks without a memory input.
  BasicLayerNormParams<S> cross_norm;
  BasicLinearParams<S> cross_query;
  BasicLinearParams<S> cross_kv;
  BasicLinearParams<S> cross_out;
  BasicLayerNormParams<S> ffn_norm;
  BasicLinearParams<S> ffn_in;
  BasicLinearParams<S> ffn_out;
};

template <class S>
struct BasicStackParams {
  BasicMatrix<S> token_embedding;     // vocab x d
  BasicMatrix<S> position_embedding;  // context x d
  /// Added at position i from row i % kLevelHeight; empty in the prompt encoder.
  BasicMatrix<S> row_embedding;  // kLevelHeight x d
  std::vector<BasicBlockParams<S>> blocks;
  BasicLayerNormParams<S> final_norm;
};

/// Double precision is the master copy (training state, checkpoints, gradient
/// checks); single precision is a faster compute copy.
template <class S>
struct BasicModelParams {
  ModelConfig config;
  BasicStackParams<S> body;
  BasicLinearParams<S> head;
  BasicStackParams<S> prompt_encoder;  // empty for infill models
};

using ModelParams = BasicModelParams<double>;
using FastModelParams = BasicModelParams<float>;

template <class S>
struct BasicTensorRef {
  std::string name;
  BasicMatrix<S>* tensor;
};
using TensorRef = BasicTensorRef<double>;

/// Every learnable tensor in a fixed order. Empty tensors are skipped.
template <class S>
std::vector<BasicTensorRef<S>> tensors(BasicModelParams<S>& params);
template <class S>
std::vector<const BasicMatrix<S>*> tensors(const BasicModelParams<S>& params);
/// Names matching tensors(), same order.
std::vector<std::string> tensor_names(const ModelParams& params);
std::size_t parameter_count(const ModelParams& params);

template <class To, class From>
BasicModelParams<To> cast_params(const BasicModelParams<From>& params);

/// Scaled-uniform initialization driven only by config.seed.
ModelParams init_model(const ModelConfig& config);
template <class S>
BasicModelParams<S> zeros_like(const BasicModelParams<S>& params);

/// Mean over positions of the prompt encoder's final hidden states.
template <class S>
BasicRowVector<S> encode_prompt(const BasicModelParams<S>& params, std::span<const int> prompt_tokens);

/// Per-position logits (tokens x vocab). `ctx` is required for generators and
/// ignored by infill models.
template <class S>
BasicMatrix<S> forward(const BasicModelParams<S>& params, std::span<const TokenId> tokens,
                       const BasicRowVector<S>* ctx = nullptr);

struct ForwardTrace {
  Matrix logits;
  /// self_attention[layer][head]: tokens x tokens probability rows.
  std::vector<std::vector<Matrix>> self_attention;
};

ForwardTrace forward_with_attention(const ModelParams& params, std::span<const TokenId> tokens,
                                    const ContextVector* ctx = nullptr);

template <class S>
BasicMatrix<S> softmax_rows(const BasicMatrix<S>& logits);

/// One training sequence. targets[i] is the token expected from position i, or
/// -1 to exclude the position from the loss.
struct TrainingExample {
  TokenSequence tokens;
  std::vector<int> prompt_tokens;  // generator only
  std::vector<int> targets;
};

template <class S>
struct BasicLossAndGrad {
  double loss = 0.0;
  std::size_t positions = 0;
  BasicModelParams<S> grads;
};
using LossAndGrad = BasicLossAndGrad<double>;

/// Mean cross-entropy over all counted positions of the batch, with gradients
/// for every tensor. Examples are reduced in batch order.
template <class S>
BasicLossAndGrad<S> loss_and_grad(const BasicModelParams<S>& params, std::span<const TrainingExample> batch);

template <class S>
double batch_loss(const BasicModelParams<S>& params, std::span<const TrainingExample> batch);

/// Incremental causal decoding with cached keys and values.
template <class S>
class BasicDecoderSession {
 public:
  BasicDecoderSession(const BasicModelParams<S>& params, const BasicRowVector<S>& ctx);

  /// Reset the window to `tokens` and return the logits of its last position.
  BasicRowVector<S> prefill(std::span<const TokenId> tokens);
  /// Append one token and return its logits.
  BasicRowVector<S> append(TokenId token);
  int length() const noexcept { return length_; }

 private:
  const BasicModelParams<S>* params_;
  BasicMatrix<S> memory_;
  std::vector<BasicMatrix<S>> keys_;
  std::vector<BasicMatrix<S>> values_;
  std::vector<BasicMatrix<S>> cross_keys_;
  std::vector<BasicMatrix<S>> cross_values_;
  int length_ = 0;
};

using DecoderSession = BasicDecoderSession<double>;
using FastDecoderSession = BasicDecoderSession<float>;

}  // namespace mario
