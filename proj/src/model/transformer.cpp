#include <algorithm>
#include <cmath>

#include "mario/error.hpp"
#include "mario/model.hpp"
#include "mario/random.hpp"

namespace mario {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;
// Query rows per block in causal attention; a block only scores keys up to its last row.
constexpr Eigen::Index kCausalBlock = 64;

template <class S>
using M = BasicMatrix<S>;
template <class S>
using V = BasicRowVector<S>;
template <class S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// ---------------------------------------------------------------- primitives

template <class S>
struct NormCache {
  M<S> xhat;
  ColVec<S> rstd;
};

template <class S>
M<S> layer_norm(const M<S>& x, const BasicLayerNormParams<S>& p, NormCache<S>* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  M<S> y(n, d);
  if (cache) {
    cache->xhat.resize(n, d);
    cache->rstd.resize(n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const S mean = x.row(i).mean();
    const S var = (x.row(i).array() - mean).square().mean();
    const S rstd = S(1) / std::sqrt(var + S(kNormEps));
    const V<S> xhat = (x.row(i).array() - mean) * rstd;
    y.row(i) = xhat.array() * p.gain.row(0).array() + p.bias.row(0).array();
    if (cache) {
      cache->xhat.row(i) = xhat;
      cache->rstd(i) = rstd;
    }
  }
  return y;
}

template <class S>
M<S> layer_norm_backward(const M<S>& dy, const BasicLayerNormParams<S>& p, const NormCache<S>& c,
                         BasicLayerNormParams<S>& g) {
  g.gain += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  g.bias += dy.colwise().sum();
  const Eigen::Index n = dy.rows(), d = dy.cols();
  M<S> dx(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const V<S> dxhat = dy.row(i).array() * p.gain.row(0).array();
    const S mean_dxhat = dxhat.mean();
    const S mean_dxhat_xhat = (dxhat.array() * c.xhat.row(i).array()).mean();
    dx.row(i) = c.rstd(i) * (dxhat.array() - mean_dxhat - c.xhat.row(i).array() * mean_dxhat_xhat);
  }
  return dx;
}

template <class S>
M<S> linear(const M<S>& x, const BasicLinearParams<S>& p) {
  M<S> y(x.rows(), p.weight.cols());
  y.noalias() = x * p.weight;
  y.rowwise() += p.bias.row(0);
  return y;
}

template <class S>
M<S> linear_backward(const M<S>& dy, const BasicLinearParams<S>& p, const M<S>& x, BasicLinearParams<S>& g) {
  g.weight.noalias() += x.transpose() * dy;
  g.bias += dy.colwise().sum();
  M<S> dx(dy.rows(), p.weight.rows());
  dx.noalias() = dy * p.weight.transpose();
  return dx;
}

template <class S>
M<S> gelu(const M<S>& x) {
  return x.unaryExpr([](S v) {
    return S(0.5) * v * (S(1) + std::tanh(S(kGeluScale) * (v + S(kGeluCubic) * v * v * v)));
  });
}

template <class S>
M<S> gelu_backward(const M<S>& dy, const M<S>& x) {
  M<S> dx(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const S v = x.data()[i];
    const S t = std::tanh(S(kGeluScale) * (v + S(kGeluCubic) * v * v * v));
    const S dt = (S(1) - t * t) * S(kGeluScale) * (S(1) + S(3 * kGeluCubic) * v * v);
    dx.data()[i] = dy.data()[i] * (S(0.5) * (S(1) + t) + S(0.5) * v * dt);
  }
  return dx;
}

// With `causal`, local row i (global row i + row_offset) keeps only columns up
// to its global index. The rest become exact zeros rather than exp(-inf),
// which would leave subnormals behind.
template <class S>
void softmax_inplace(M<S>& scores, bool causal = false, Eigen::Index row_offset = 0) {
  const Eigen::Index cols = scores.cols();
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const Eigen::Index n = causal ? std::min(i + row_offset + 1, cols) : cols;
    auto row = scores.row(i).head(n);
    const S m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
    if (n < cols) scores.row(i).tail(cols - n).setZero();
  }
}

// Multi-head scaled dot-product attention. With `causal`, query i attends
// keys j <= i only.
template <class S>
M<S> attention(const M<S>& q, const M<S>& k, const M<S>& v, int heads, bool causal, std::vector<M<S>>* probs_out) {
  const Eigen::Index t = q.rows(), s = k.rows(), d = q.cols(), dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  const Eigen::Index block = causal ? kCausalBlock : t;
  M<S> out(t, d);
  if (probs_out) probs_out->resize(heads);
  for (int h = 0; h < heads; ++h) {
    M<S> probs;
    if (probs_out) probs.setZero(t, s);
    for (Eigen::Index r0 = 0; r0 < t; r0 += block) {
      const Eigen::Index rows = std::min(block, t - r0);
      const Eigen::Index keys = causal ? std::min(s, r0 + rows) : s;
      M<S> scores(rows, keys);
      scores.noalias() = q.block(r0, h * dh, rows, dh) * k.block(0, h * dh, keys, dh).transpose();
      scores *= scale;
      softmax_inplace<S>(scores, causal, r0);
      out.block(r0, h * dh, rows, dh).noalias() = scores * v.block(0, h * dh, keys, dh);
      if (probs_out) probs.block(r0, 0, rows, keys) = scores;
    }
    if (probs_out) (*probs_out)[h] = std::move(probs);
  }
  return out;
}

template <class S>
void attention_backward(const M<S>& dout, const M<S>& q, const M<S>& k, const M<S>& v, const std::vector<M<S>>& probs,
                        int heads, bool causal, M<S>& dq, M<S>& dk, M<S>& dv) {
  const Eigen::Index t = q.rows(), s = k.rows(), d = q.cols(), dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  const Eigen::Index block = causal ? kCausalBlock : t;
  dq.setZero(t, d);
  dk.setZero(s, d);
  dv.setZero(s, d);
  for (int h = 0; h < heads; ++h) {
    for (Eigen::Index r0 = 0; r0 < t; r0 += block) {
      const Eigen::Index rows = std::min(block, t - r0);
      const Eigen::Index keys = causal ? std::min(s, r0 + rows) : s;
      const M<S> p = probs[h].block(r0, 0, rows, keys);
      const M<S> dout_h = dout.block(r0, h * dh, rows, dh);
      M<S> dp(rows, keys);
      dp.noalias() = dout_h * v.block(0, h * dh, keys, dh).transpose();
      dv.block(0, h * dh, keys, dh).noalias() += p.transpose() * dout_h;
      const ColVec<S> row_dot = (dp.array() * p.array()).rowwise().sum();
      const M<S> ds = (p.array() * (dp.colwise() - row_dot).array()).matrix() * scale;
      dq.block(r0, h * dh, rows, dh).noalias() += ds * k.block(0, h * dh, keys, dh);
      dk.block(0, h * dh, keys, dh).noalias() += ds.transpose() * q.block(r0, h * dh, rows, dh);
    }
  }
}

// ---------------------------------------------------------------- blocks

template <class S>
struct BlockCache {
  NormCache<S> self_norm;
  M<S> self_norm_out;
  M<S> qkv;
  std::vector<M<S>> self_probs;
  M<S> self_ctx;
  NormCache<S> cross_norm;
  M<S> cross_norm_out;
  M<S> cross_q;
  M<S> cross_kv;
  std::vector<M<S>> cross_probs;
  M<S> cross_ctx;
  NormCache<S> ffn_norm;
  M<S> ffn_norm_out;
  M<S> ffn_pre;
  M<S> ffn_act;
};

template <class S>
bool has_cross(const BasicBlockParams<S>& b) {
  return b.cross_kv.weight.size() > 0;
}

template <class S>
M<S> block_forward(const BasicBlockParams<S>& b, const M<S>& x, const M<S>* memory, int heads, bool causal,
                   BlockCache<S>* c, std::vector<M<S>>* probs_out = nullptr) {
  const Eigen::Index d = x.cols();
  M<S> a1 = layer_norm(x, b.self_norm, c ? &c->self_norm : nullptr);
  M<S> qkv = linear(a1, b.qkv);
  std::vector<M<S>> self_probs;
  const bool keep_probs = c != nullptr || probs_out != nullptr;
  M<S> self_ctx = attention<S>(qkv.leftCols(d), qkv.middleCols(d, d), qkv.rightCols(d), heads, causal,
                               keep_probs ? &self_probs : nullptr);
  M<S> x1 = x + linear(self_ctx, b.self_out);
  if (probs_out) *probs_out = self_probs;

  if (has_cross(b) && memory != nullptr) {
    M<S> a2 = layer_norm(x1, b.cross_norm, c ? &c->cross_norm : nullptr);
    M<S> cq = linear(a2, b.cross_query);
    M<S> ckv = linear(*memory, b.cross_kv);
    std::vector<M<S>> cross_probs;
    M<S> cross_ctx = attention<S>(cq, ckv.leftCols(d), ckv.rightCols(d), heads, false, c ? &cross_probs : nullptr);
    x1 += linear(cross_ctx, b.cross_out);
    if (c) {
      c->cross_norm_out = std::move(a2);
      c->cross_q = std::move(cq);
      c->cross_kv = std::move(ckv);
      c->cross_probs = std::move(cross_probs);
      c->cross_ctx = std::move(cross_ctx);
    }
  }

  M<S> a3 = layer_norm(x1, b.ffn_norm, c ? &c->ffn_norm : nullptr);
  M<S> pre = linear(a3, b.ffn_in);
  M<S> act = gelu(pre);
  x1 += linear(act, b.ffn_out);

  if (c) {
    c->self_norm_out = std::move(a1);
    c->qkv = std::move(qkv);
    c->self_probs = std::move(self_probs);
    c->self_ctx = std::move(self_ctx);
    c->ffn_norm_out = std::move(a3);
    c->ffn_pre = std::move(pre);
    c->ffn_act = std::move(act);
  }
  return x1;
}

template <class S>
M<S> block_backward(const BasicBlockParams<S>& b, const BlockCache<S>& c, const M<S>& dout, const M<S>* memory,
                    M<S>* dmemory, int heads, bool causal, BasicBlockParams<S>& g) {
  const Eigen::Index d = dout.cols();

  const M<S> dact = linear_backward(dout, b.ffn_out, c.ffn_act, g.ffn_out);
  const M<S> dpre = gelu_backward(dact, c.ffn_pre);
  const M<S> da3 = linear_backward(dpre, b.ffn_in, c.ffn_norm_out, g.ffn_in);
  M<S> dx = dout + layer_norm_backward(da3, b.ffn_norm, c.ffn_norm, g.ffn_norm);

  if (has_cross(b) && memory != nullptr) {
    const M<S> dctx = linear_backward(dx, b.cross_out, c.cross_ctx, g.cross_out);
    M<S> dq, dk, dv;
    const M<S> ck = c.cross_kv.leftCols(d), cv = c.cross_kv.rightCols(d);
    attention_backward<S>(dctx, c.cross_q, ck, cv, c.cross_probs, heads, false, dq, dk, dv);
    const M<S> da2 = linear_backward(dq, b.cross_query, c.cross_norm_out, g.cross_query);
    M<S> dkv(dk.rows(), 2 * d);
    dkv << dk, dv;
    const M<S> dmem = linear_backward(dkv, b.cross_kv, *memory, g.cross_kv);
    if (dmemory) *dmemory += dmem;
    dx += layer_norm_backward(da2, b.cross_norm, c.cross_norm, g.cross_norm);
  }

  const M<S> dself = linear_backward(dx, b.self_out, c.self_ctx, g.self_out);
  M<S> dq, dk, dv;
  const M<S> q = c.qkv.leftCols(d), k = c.qkv.middleCols(d, d), v = c.qkv.rightCols(d);
  attention_backward<S>(dself, q, k, v, c.self_probs, heads, causal, dq, dk, dv);
  M<S> dqkv(dq.rows(), 3 * d);
  dqkv << dq, dk, dv;
  const M<S> da1 = linear_backward(dqkv, b.qkv, c.self_norm_out, g.qkv);
  return dx + layer_norm_backward(da1, b.self_norm, c.self_norm, g.self_norm);
}

// ---------------------------------------------------------------- stacks

template <class S>
struct StackCache {
  std::vector<BlockCache<S>> blocks;
  NormCache<S> final_norm;
};

template <class S>
M<S> stack_forward(const BasicStackParams<S>& s, std::span<const int> tokens, const M<S>* memory, int heads,
                   bool causal, StackCache<S>* cache, std::vector<std::vector<M<S>>>* probs_out = nullptr) {
  const Eigen::Index d = s.token_embedding.cols();
  M<S> x(static_cast<Eigen::Index>(tokens.size()), d);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) =
        s.token_embedding.row(tokens[i]) + s.position_embedding.row(static_cast<Eigen::Index>(i));
  }
  if (s.row_embedding.size() > 0) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) += s.row_embedding.row(i % s.row_embedding.rows());
  }
  if (cache) cache->blocks.resize(s.blocks.size());
  if (probs_out) probs_out->resize(s.blocks.size());
  for (std::size_t l = 0; l < s.blocks.size(); ++l) {
    x = block_forward(s.blocks[l], x, memory, heads, causal, cache ? &cache->blocks[l] : nullptr,
                      probs_out ? &(*probs_out)[l] : nullptr);
  }
  return layer_norm(x, s.final_norm, cache ? &cache->final_norm : nullptr);
}

template <class S>
void stack_backward(const BasicStackParams<S>& s, std::span<const int> tokens, const StackCache<S>& cache,
                    const M<S>& dout, const M<S>* memory, M<S>* dmemory, int heads, bool causal,
                    BasicStackParams<S>& g) {
  M<S> dx = layer_norm_backward(dout, s.final_norm, cache.final_norm, g.final_norm);
  for (std::size_t l = s.blocks.size(); l-- > 0;) {
    dx = block_backward(s.blocks[l], cache.blocks[l], dx, memory, dmemory, heads, causal, g.blocks[l]);
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    g.token_embedding.row(tokens[i]) += dx.row(row);
    g.position_embedding.row(row) += dx.row(row);
    if (g.row_embedding.size() > 0) g.row_embedding.row(row % g.row_embedding.rows()) += dx.row(row);
  }
}

// ---------------------------------------------------------------- validation

void check_body_tokens(const ModelConfig& c, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw Error(ErrorCode::ShapeMismatch, "empty token sequence");
  if (static_cast<int>(tokens.size()) > c.context_len) {
    throw Error(ErrorCode::SequenceTooLong,
                std::to_string(tokens.size()) + " tokens exceed context " + std::to_string(c.context_len));
  }
  for (TokenId t : tokens) {
    if (t < 0 || t >= c.vocab_size) throw Error(ErrorCode::UnknownId, "token id " + std::to_string(t));
  }
}

void check_prompt_tokens(const ModelConfig& c, std::span<const int> tokens) {
  if (c.kind != ModelKind::Generator) throw Error(ErrorCode::BadConfig, "infill models have no prompt encoder");
  if (tokens.empty()) throw Error(ErrorCode::EmptyPrompt, "prompt has no tokens");
  if (static_cast<int>(tokens.size()) > c.prompt_context) {
    throw Error(ErrorCode::SequenceTooLong, "prompt of " + std::to_string(tokens.size()) + " tokens");
  }
  for (int t : tokens) {
    if (t < 0 || t >= c.prompt_vocab_size) throw Error(ErrorCode::UnknownId, "prompt token " + std::to_string(t));
  }
}

template <class S>
const M<S>* memory_for(const ModelConfig& c, const V<S>* ctx, M<S>& storage) {
  if (c.kind != ModelKind::Generator) return nullptr;
  if (ctx == nullptr) throw Error(ErrorCode::ShapeMismatch, "generator forward needs a context vector");
  if (ctx->cols() != c.embed_dim) throw Error(ErrorCode::ShapeMismatch, "context vector width");
  storage = *ctx;
  return &storage;
}

// ---------------------------------------------------------------- init

void fill_uniform(Matrix& m, Eigen::Index rows, Eigen::Index cols, double half_width, Rng& rng) {
  m.resize(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * uniform01(rng) - 1.0) * half_width;
}

void init_linear(BasicLinearParams<double>& p, int in, int out, Rng& rng) {
  fill_uniform(p.weight, in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  p.bias = Matrix::Zero(1, out);
}

void init_norm(BasicLayerNormParams<double>& p, int d) {
  p.gain = Matrix::Ones(1, d);
  p.bias = Matrix::Zero(1, d);
}

BasicStackParams<double> init_stack(int vocab, int context, int rows, int d, int layers, int ffn, bool cross,
                                    Rng& rng) {
  BasicStackParams<double> s;
  fill_uniform(s.token_embedding, vocab, d, 0.1, rng);
  fill_uniform(s.position_embedding, context, d, 0.1, rng);
  if (rows > 0) fill_uniform(s.row_embedding, rows, d, 0.1, rng);
  s.blocks.resize(static_cast<std::size_t>(layers));
  for (auto& b : s.blocks) {
    init_norm(b.self_norm, d);
    init_linear(b.qkv, d, 3 * d, rng);
    init_linear(b.self_out, d, d, rng);
    if (cross) {
      init_norm(b.cross_norm, d);
      init_linear(b.cross_query, d, d, rng);
      init_linear(b.cross_kv, d, 2 * d, rng);
      init_linear(b.cross_out, d, d, rng);
    }
    init_norm(b.ffn_norm, d);
    init_linear(b.ffn_in, d, ffn * d, rng);
    init_linear(b.ffn_out, ffn * d, d, rng);
  }
  init_norm(s.final_norm, d);
  return s;
}

template <class StackT, class F>
void visit_stack(StackT& s, const std::string& prefix, F&& f) {
  f(prefix + ".token_embedding", s.token_embedding);
  f(prefix + ".position_embedding", s.position_embedding);
  f(prefix + ".row_embedding", s.row_embedding);
  for (std::size_t l = 0; l < s.blocks.size(); ++l) {
    auto& b = s.blocks[l];
    const std::string p = prefix + ".block" + std::to_string(l);
    auto norm = [&](const std::string& n, auto& ln) {
      f(p + "." + n + ".gain", ln.gain);
      f(p + "." + n + ".bias", ln.bias);
    };
    auto lin = [&](const std::string& n, auto& li) {
      f(p + "." + n + ".weight", li.weight);
      f(p + "." + n + ".bias", li.bias);
    };
    norm("self_norm", b.self_norm);
    lin("qkv", b.qkv);
    lin("self_out", b.self_out);
    norm("cross_norm", b.cross_norm);
    lin("cross_query", b.cross_query);
    lin("cross_kv", b.cross_kv);
    lin("cross_out", b.cross_out);
    norm("ffn_norm", b.ffn_norm);
    lin("ffn_in", b.ffn_in);
    lin("ffn_out", b.ffn_out);
  }
  f(prefix + ".final_norm.gain", s.final_norm.gain);
  f(prefix + ".final_norm.bias", s.final_norm.bias);
}

template <class ParamsT, class F>
void visit_model(ParamsT& p, F&& f) {
  visit_stack(p.body, "body", f);
  f("head.weight", p.head.weight);
  f("head.bias", p.head.bias);
  visit_stack(p.prompt_encoder, "prompt", f);
}

template <class To, class From>
BasicLayerNormParams<To> cast_norm(const BasicLayerNormParams<From>& n) {
  return {n.gain.template cast<To>(), n.bias.template cast<To>()};
}

template <class To, class From>
BasicLinearParams<To> cast_linear(const BasicLinearParams<From>& l) {
  return {l.weight.template cast<To>(), l.bias.template cast<To>()};
}

template <class To, class From>
BasicStackParams<To> cast_stack(const BasicStackParams<From>& s) {
  BasicStackParams<To> r;
  r.token_embedding = s.token_embedding.template cast<To>();
  r.position_embedding = s.position_embedding.template cast<To>();
  r.row_embedding = s.row_embedding.template cast<To>();
  for (const auto& b : s.blocks) {
    r.blocks.push_back({cast_norm<To>(b.self_norm), cast_linear<To>(b.qkv), cast_linear<To>(b.self_out),
                        cast_norm<To>(b.cross_norm), cast_linear<To>(b.cross_query), cast_linear<To>(b.cross_kv),
                        cast_linear<To>(b.cross_out), cast_norm<To>(b.ffn_norm), cast_linear<To>(b.ffn_in),
                        cast_linear<To>(b.ffn_out)});
  }
  r.final_norm = cast_norm<To>(s.final_norm);
  return r;
}

std::size_t count_positions(std::span<const TrainingExample> batch, int vocab) {
  if (batch.empty()) throw Error(ErrorCode::ShapeMismatch, "empty batch");
  std::size_t n = 0;
  for (const auto& ex : batch) {
    if (ex.targets.size() != ex.tokens.size()) throw Error(ErrorCode::ShapeMismatch, "targets and tokens differ in length");
    for (int t : ex.targets) {
      if (t >= vocab) throw Error(ErrorCode::UnknownId, "target id " + std::to_string(t));
      if (t >= 0) ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::ShapeMismatch, "batch has no target positions");
  return n;
}

// Forward one example and return its summed loss. When `grads` is set, also
// backpropagate the loss scaled by 1 / total_positions.
template <class S>
double run_example(const BasicModelParams<S>& p, const TrainingExample& ex, std::size_t total_positions,
                   BasicModelParams<S>* grads) {
  const ModelConfig& cfg = p.config;
  check_body_tokens(cfg, ex.tokens);
  const bool generator = cfg.kind == ModelKind::Generator;
  const int heads = cfg.num_heads;

  StackCache<S> prompt_cache;
  M<S> memory;
  if (generator) {
    check_prompt_tokens(cfg, ex.prompt_tokens);
    const M<S> prompt_hidden =
        stack_forward<S>(p.prompt_encoder, ex.prompt_tokens, nullptr, heads, false, grads ? &prompt_cache : nullptr);
    memory = prompt_hidden.colwise().mean();
  }
  const M<S>* mem = generator ? &memory : nullptr;

  StackCache<S> body_cache;
  const M<S> hidden = stack_forward<S>(p.body, ex.tokens, mem, heads, generator, grads ? &body_cache : nullptr);
  const M<S> logits = linear(hidden, p.head);

  double loss = 0.0;
  M<S> dlogits;
  if (grads) dlogits.setZero(logits.rows(), logits.cols());
  const S inv = S(1) / static_cast<S>(total_positions);
  for (std::size_t i = 0; i < ex.targets.size(); ++i) {
    const int t = ex.targets[i];
    if (t < 0) continue;
    const auto row = static_cast<Eigen::Index>(i);
    const S m = logits.row(row).maxCoeff();
    const V<S> e = (logits.row(row).array() - m).exp();
    const S z = e.sum();
    loss += static_cast<double>(m + std::log(z) - logits(row, t));
    if (grads) {
      // d(mean CE)/d(logits) = (softmax - onehot) / N
      dlogits.row(row) = e * (inv / z);
      dlogits(row, t) -= inv;
    }
  }
  if (!grads) return loss;

  const M<S> dhidden = linear_backward(dlogits, p.head, hidden, grads->head);
  M<S> dmemory;
  if (generator) dmemory = M<S>::Zero(1, cfg.embed_dim);
  stack_backward<S>(p.body, ex.tokens, body_cache, dhidden, mem, generator ? &dmemory : nullptr, heads, generator,
                    grads->body);
  if (generator) {
    const auto n = static_cast<Eigen::Index>(ex.prompt_tokens.size());
    const M<S> dprompt = M<S>::Ones(n, 1) * (dmemory / static_cast<S>(n));
    stack_backward<S>(p.prompt_encoder, ex.prompt_tokens, prompt_cache, dprompt, nullptr, nullptr, heads, false,
                      grads->prompt_encoder);
  }
  return loss;
}

}  // namespace

// ---------------------------------------------------------------- public API

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::BadConfig, why); };
  if (vocab_size < 1) fail("vocab_size must be positive");
  if (embed_dim < 1 || num_heads < 1) fail("embed_dim and num_heads must be positive");
  if (embed_dim % num_heads != 0) fail("embed_dim must be divisible by num_heads");
  if (num_layers < 1) fail("num_layers must be positive");
  if (context_len < kLevelHeight || context_len % kLevelHeight != 0) fail("context_len must be a multiple of 14");
  if (ffn_mult < 1) fail("ffn_mult must be positive");
  if (kind == ModelKind::Generator && (prompt_layers < 1 || prompt_context < 1 || prompt_vocab_size < 1)) {
    fail("prompt encoder dimensions must be positive");
  }
}

template <class S>
std::vector<BasicTensorRef<S>> tensors(BasicModelParams<S>& params) {
  std::vector<BasicTensorRef<S>> out;
  visit_model(params, [&](const std::string& name, M<S>& m) {
    if (m.size() > 0) out.push_back({name, &m});
  });
  return out;
}

template <class S>
std::vector<const M<S>*> tensors(const BasicModelParams<S>& params) {
  std::vector<const M<S>*> out;
  visit_model(params, [&](const std::string&, const M<S>& m) {
    if (m.size() > 0) out.push_back(&m);
  });
  return out;
}

std::vector<std::string> tensor_names(const ModelParams& params) {
  std::vector<std::string> out;
  visit_model(params, [&](const std::string& name, const Matrix& m) {
    if (m.size() > 0) out.push_back(name);
  });
  return out;
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for (const Matrix* m : tensors(params)) n += static_cast<std::size_t>(m->size());
  return n;
}

template <class To, class From>
BasicModelParams<To> cast_params(const BasicModelParams<From>& params) {
  BasicModelParams<To> out;
  out.config = params.config;
  out.body = cast_stack<To>(params.body);
  out.head = cast_linear<To>(params.head);
  out.prompt_encoder = cast_stack<To>(params.prompt_encoder);
  return out;
}

ModelParams init_model(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  ModelParams p;
  p.config = config;
  const int d = config.embed_dim;
  const bool generator = config.kind == ModelKind::Generator;
  p.body = init_stack(config.vocab_size, config.context_len, kLevelHeight, d, config.num_layers, config.ffn_mult,
                      generator, rng);
  init_linear(p.head, d, config.vocab_size, rng);
  if (generator) {
    p.prompt_encoder =
        init_stack(config.prompt_vocab_size, config.prompt_context, 0, d, config.prompt_layers, config.ffn_mult,
                   false, rng);
  }
  return p;
}

template <class S>
BasicModelParams<S> zeros_like(const BasicModelParams<S>& params) {
  BasicModelParams<S> z = params;
  for (auto& t : tensors(z)) t.tensor->setZero();
  return z;
}

template <class S>
V<S> encode_prompt(const BasicModelParams<S>& params, std::span<const int> prompt_tokens) {
  check_prompt_tokens(params.config, prompt_tokens);
  const M<S> hidden =
      stack_forward<S>(params.prompt_encoder, prompt_tokens, nullptr, params.config.num_heads, false, nullptr);
  return hidden.colwise().mean();
}

template <class S>
M<S> forward(const BasicModelParams<S>& params, std::span<const TokenId> tokens, const V<S>* ctx) {
  check_body_tokens(params.config, tokens);
  M<S> storage;
  const M<S>* memory = memory_for<S>(params.config, ctx, storage);
  const bool causal = params.config.kind == ModelKind::Generator;
  const M<S> hidden = stack_forward<S>(params.body, tokens, memory, params.config.num_heads, causal, nullptr);
  return linear(hidden, params.head);
}

ForwardTrace forward_with_attention(const ModelParams& params, std::span<const TokenId> tokens,
                                    const ContextVector* ctx) {
  check_body_tokens(params.config, tokens);
  Matrix storage;
  const Matrix* memory = memory_for<double>(params.config, ctx, storage);
  const bool causal = params.config.kind == ModelKind::Generator;
  ForwardTrace trace;
  const Matrix hidden = stack_forward<double>(params.body, tokens, memory, params.config.num_heads, causal, nullptr,
                                              &trace.self_attention);
  trace.logits = linear(hidden, params.head);
  return trace;
}

template <class S>
M<S> softmax_rows(const M<S>& logits) {
  M<S> p = logits;
  softmax_inplace<S>(p);
  return p;
}

template <class S>
BasicLossAndGrad<S> loss_and_grad(const BasicModelParams<S>& params, std::span<const TrainingExample> batch) {
  const std::size_t total = count_positions(batch, params.config.vocab_size);
  BasicLossAndGrad<S> out;
  out.grads = zeros_like(params);
  double loss_sum = 0.0;
  for (const auto& ex : batch) loss_sum += run_example<S>(params, ex, total, &out.grads);
  out.loss = loss_sum / static_cast<double>(total);
  out.positions = total;
  return out;
}

template <class S>
double batch_loss(const BasicModelParams<S>& params, std::span<const TrainingExample> batch) {
  const std::size_t total = count_positions(batch, params.config.vocab_size);
  double loss_sum = 0.0;
  for (const auto& ex : batch) loss_sum += run_example<S>(params, ex, total, nullptr);
  return loss_sum / static_cast<double>(total);
}

// ---------------------------------------------------------------- incremental decoding

template <class S>
BasicDecoderSession<S>::BasicDecoderSession(const BasicModelParams<S>& params, const V<S>& ctx) : params_(&params) {
  if (params.config.kind != ModelKind::Generator) throw Error(ErrorCode::BadConfig, "decoder sessions need a generator");
  if (ctx.cols() != params.config.embed_dim) throw Error(ErrorCode::ShapeMismatch, "context vector width");
  memory_ = ctx;
  const int d = params.config.embed_dim;
  const std::size_t layers = params.body.blocks.size();
  keys_.assign(layers, M<S>::Zero(params.config.context_len, d));
  values_.assign(layers, M<S>::Zero(params.config.context_len, d));
  for (const auto& b : params.body.blocks) {
    const M<S> kv = linear(memory_, b.cross_kv);
    cross_keys_.push_back(kv.leftCols(d));
    cross_values_.push_back(kv.rightCols(d));
  }
}

template <class S>
V<S> BasicDecoderSession<S>::prefill(std::span<const TokenId> tokens) {
  const auto& p = *params_;
  check_body_tokens(p.config, tokens);
  const int d = p.config.embed_dim;
  StackCache<S> cache;
  const M<S> hidden = stack_forward<S>(p.body, tokens, &memory_, p.config.num_heads, true, &cache);
  const auto n = static_cast<Eigen::Index>(tokens.size());
  for (std::size_t l = 0; l < cache.blocks.size(); ++l) {
    keys_[l].topRows(n) = cache.blocks[l].qkv.middleCols(d, d);
    values_[l].topRows(n) = cache.blocks[l].qkv.rightCols(d);
  }
  length_ = static_cast<int>(n);
  const M<S> last = hidden.bottomRows(1);
  return linear(last, p.head);
}

template <class S>
V<S> BasicDecoderSession<S>::append(TokenId token) {
  const auto& p = *params_;
  if (length_ >= p.config.context_len) throw Error(ErrorCode::SequenceTooLong, "decoder window is full");
  if (token < 0 || token >= p.config.vocab_size) throw Error(ErrorCode::UnknownId, "token id " + std::to_string(token));
  const int d = p.config.embed_dim, heads = p.config.num_heads, dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  const Eigen::Index pos = length_;

  M<S> x = p.body.token_embedding.row(token) + p.body.position_embedding.row(pos);
  if (p.body.row_embedding.size() > 0) x += p.body.row_embedding.row(pos % p.body.row_embedding.rows());
  for (std::size_t l = 0; l < p.body.blocks.size(); ++l) {
    const auto& b = p.body.blocks[l];
    const M<S> qkv = linear(layer_norm<S>(x, b.self_norm, nullptr), b.qkv);
    keys_[l].row(pos) = qkv.middleCols(d, d);
    values_[l].row(pos) = qkv.rightCols(d);
    M<S> ctx(1, d);
    for (int h = 0; h < heads; ++h) {
      M<S> scores(1, pos + 1);
      scores.noalias() = qkv.middleCols(h * dh, dh) * keys_[l].topRows(pos + 1).middleCols(h * dh, dh).transpose();
      scores *= scale;
      softmax_inplace<S>(scores);
      ctx.middleCols(h * dh, dh).noalias() = scores * values_[l].topRows(pos + 1).middleCols(h * dh, dh);
    }
    x += linear(ctx, b.self_out);

    const M<S> cq = linear(layer_norm<S>(x, b.cross_norm, nullptr), b.cross_query);
    const M<S> cross = attention<S>(cq, cross_keys_[l], cross_values_[l], heads, false, nullptr);
    x += linear(cross, b.cross_out);

    x += linear(gelu<S>(linear(layer_norm<S>(x, b.ffn_norm, nullptr), b.ffn_in)), b.ffn_out);
  }
  ++length_;
  return linear(layer_norm<S>(x, p.body.final_norm, nullptr), p.head);
}

// ---------------------------------------------------------------- instantiations

#define MARIO_INSTANTIATE(S)                                                                                \
  template std::vector<BasicTensorRef<S>> tensors(BasicModelParams<S>&);                                    \
  template std::vector<const M<S>*> tensors(const BasicModelParams<S>&);                                    \
  template BasicModelParams<S> zeros_like(const BasicModelParams<S>&);                                      \
  template V<S> encode_prompt(const BasicModelParams<S>&, std::span<const int>);                            \
  template M<S> forward(const BasicModelParams<S>&, std::span<const TokenId>, const V<S>*);                 \
  template M<S> softmax_rows(const M<S>&);                                                                  \
  template BasicLossAndGrad<S> loss_and_grad(const BasicModelParams<S>&, std::span<const TrainingExample>); \
  template double batch_loss(const BasicModelParams<S>&, std::span<const TrainingExample>);                 \
  template class BasicDecoderSession<S>;

MARIO_INSTANTIATE(double)
MARIO_INSTANTIATE(float)
#undef MARIO_INSTANTIATE

template BasicModelParams<float> cast_params<float, double>(const BasicModelParams<double>&);
template BasicModelParams<double> cast_params<double, float>(const BasicModelParams<float>&);

}  // namespace mario
