#include "mario/evaluation.hpp"

#include <array>

#include "mario/error.hpp"

namespace mario {

EvalResult evaluate(const ModelParams& params, std::span<const TrainingExample> examples) {
  const TokenId path_id = tile_index(kPath);
  const FastModelParams fast = cast_params<float>(params);
  EvalResult r;
  std::size_t correct = 0, path_correct = 0;
  for (const auto& ex : examples) {
    BasicMatrix<float> logits;
    if (params.config.kind == ModelKind::Generator) {
      const BasicRowVector<float> ctx = encode_prompt(fast, ex.prompt_tokens);
      logits = forward(fast, ex.tokens, &ctx);
    } else {
      logits = forward(fast, ex.tokens);
    }
    for (std::size_t i = 0; i < ex.targets.size(); ++i) {
      const int target = ex.targets[i];
      if (target < 0) continue;
      Eigen::Index best;
      logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
      const bool hit = best == target;
      ++r.positions;
      correct += hit;
      if (target == path_id) {
        ++r.path_positions;
        path_correct += hit;
      }
    }
  }
  if (r.positions == 0) throw Error(ErrorCode::EmptyValidation, "no validation positions");
  r.tile_acc = static_cast<double>(correct) / static_cast<double>(r.positions);
  if (r.path_positions > 0) r.path_acc = static_cast<double>(path_correct) / static_cast<double>(r.path_positions);
  return r;
}

double unigram_baseline(const LevelGrid& train, std::span<const TrainingExample> examples, const Vocab& vocab) {
  std::array<std::size_t, 256> counts{};
  for (const auto& row : train.rows()) {
    for (char c : row) ++counts[static_cast<unsigned char>(c)];
  }
  char best = kEmpty;
  for (char c : kTileSymbols) {
    if (counts[static_cast<unsigned char>(c)] > counts[static_cast<unsigned char>(best)]) best = c;
  }
  const TokenId best_id = vocab.find(std::string(1, best));
  std::size_t hits = 0, total = 0;
  for (const auto& ex : examples) {
    for (int t : ex.targets) {
      if (t < 0) continue;
      ++total;
      hits += t == best_id;
    }
  }
  if (total == 0) throw Error(ErrorCode::EmptyValidation, "no validation positions");
  return static_cast<double>(hits) / static_cast<double>(total);
}

ClosestSample closest_training_sample(const LevelGrid& level, const LevelGrid& corpus) {
  const int w = level.width();
  if (w > corpus.width()) {
    throw Error(ErrorCode::LevelWiderThanCorpus, "level of width " + std::to_string(w) + " exceeds corpus width " +
                                                     std::to_string(corpus.width()));
  }
  const std::string lv = flatten(level), cv = flatten(corpus);
  ClosestSample best{0, 2.0};
  const std::size_t n = lv.size();
  for (int start = 0; start + w <= corpus.width(); ++start) {
    const char* base = cv.data() + static_cast<std::size_t>(start) * kLevelHeight;
    std::size_t diff = 0;
    for (std::size_t i = 0; i < n; ++i) diff += base[i] != lv[i];
    const double d = static_cast<double>(diff) / static_cast<double>(n);
    if (d < best.distance) best = {start, d};
  }
  return best;
}

}  // namespace mario
