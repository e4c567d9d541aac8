#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"
#include "mario/corpus.hpp"
#include "mario/model.hpp"
#include "mario/optim.hpp"
#include "mario/prompt.hpp"
#include "mario/random.hpp"
#include "mario/tokenizer.hpp"

namespace mario {

struct TrainConfig {
  int steps = 5000;
  int batch_size = 4;
  AdamConfig adam{};
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
  /// Trailing fraction of stitched columns held out for validation.
  double val_fraction = 0.1;
  /// Validate every N steps; 0 disables.
  int eval_every = 250;
  /// Column stride between validation windows.
  int eval_stride = 10;
  /// Stop after a validation pass whose tile accuracy exceeds both this value
  /// and the unigram baseline; 0 disables.
  double stop_tile_acc = 0.0;
  /// Infill models train on windows this wide.
  int infill_window_columns = 24;
  /// Widest contiguous column span masked in an infill example.
  int infill_max_span_columns = 6;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct CorpusSplit {
  LevelGrid train;
  LevelGrid val;
};

/// Hold out the final `val_fraction` of columns. Throws EmptyValidation when
/// either side is narrower than one window.
CorpusSplit split_corpus(const LevelGrid& stitched, double val_fraction, int window_columns = kWindowColumns);

/// Token ids of a flattened region under a char vocabulary.
TokenSequence encode_level(const LevelGrid& level, const Vocab& vocab);

/// Next-token example for the window starting at `start_col`. The last target
/// is -1 when the window touches the end of the region.
TrainingExample generator_example(const LevelGrid& region, int start_col, const Vocab& vocab,
                                  const QuantileConfig& quantiles, int window_columns = kWindowColumns);

/// Mask columns [mask_begin, mask_begin + mask_width) of `window`; targets are
/// set only on masked positions. Positions listed in `revealed` keep their
/// original token but carry no loss.
TrainingExample infill_example(const LevelGrid& window, int mask_begin, int mask_width, const Vocab& vocab,
                               const std::vector<int>& revealed = {});

struct MetricsRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct EvalRow {
  std::int64_t step = 0;
  double tile_acc = 0.0;
  double path_acc = 0.0;
};

struct TrainState {
  ModelParams params;
  OptState opt;
  Rng rng;
  std::int64_t step = 0;
  std::vector<MetricsRow> metrics;
  std::vector<EvalRow> evals;
  bool stopped_early = false;
};

TrainState start_training(const ModelConfig& model, const TrainConfig& config);

/// Validation set used during training: generator windows every
/// `eval_stride` columns, or infill windows with seeded masks.
std::vector<TrainingExample> validation_set(ModelKind kind, const LevelGrid& val, const Vocab& vocab,
                                            const QuantileConfig& quantiles, const TrainConfig& config);

using StepCallback = std::function<void(const TrainState&)>;

/// Run up to config.steps total steps (continuing from state.step). Each step
/// draws batch_size random windows from the training region.
void train(TrainState& state, const CorpusSplit& split, const Vocab& vocab, const QuantileConfig& quantiles,
           const TrainConfig& config, const StepCallback& on_step = {});

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string evals_csv(const std::vector<EvalRow>& rows);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& text);

}  // namespace mario
