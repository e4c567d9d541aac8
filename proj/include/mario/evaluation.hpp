#pragma once

#include <span>

#include "mario/corpus.hpp"
#include "mario/model.hpp"
#include "mario/tokenizer.hpp"

namespace mario {

struct EvalResult {
  double tile_acc = 0.0;
  /// Accuracy on positions whose target is the path tile; 0 when there are none.
  double path_acc = 0.0;
  std::size_t positions = 0;
  std::size_t path_positions = 0;
};

/// Teacher-forced argmax accuracy over every position with a target.
/// Throws EmptyValidation.
EvalResult evaluate(const ModelParams& params, std::span<const TrainingExample> examples);

/// Accuracy of always predicting the most frequent token of `train`.
double unigram_baseline(const LevelGrid& train, std::span<const TrainingExample> examples, const Vocab& vocab);

struct ClosestSample {
  int start_col = 0;
  /// Fraction of differing tiles.
  double distance = 0.0;
};

/// Exhaustive scan over every equal-width corpus window; the first minimum
/// wins. Throws LevelWiderThanCorpus.
ClosestSample closest_training_sample(const LevelGrid& level, const LevelGrid& corpus);

}  // namespace mario
