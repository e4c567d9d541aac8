#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mario/corpus.hpp"
#include "mario/generation.hpp"
#include "mario/model.hpp"
#include "mario/playability.hpp"
#include "mario/prompt.hpp"
#include "mario/random.hpp"
#include "mario/tokenizer.hpp"

namespace mario {

using BehaviorCharacteristic = std::vector<double>;

inline constexpr int kBcSmoothingWindow = 5;

/// Per-column mean row of the predicted path, gaps carried forward (leading
/// gaps take the first value), centred moving average over
/// kBcSmoothingWindow columns (shrinking at the edges), divided by height - 1.
/// Throws NoPath.
BehaviorCharacteristic behavior_characteristic(const LevelGrid& level);
BehaviorCharacteristic behavior_characteristic(const Path& path, int width, int height = kLevelHeight);

using BcDistance = std::function<double(const BehaviorCharacteristic&, const BehaviorCharacteristic&)>;

double euclidean_distance(const BehaviorCharacteristic& a, const BehaviorCharacteristic& b);

/// Mean distance to the k nearest BCs in `others` (all of them if fewer).
/// Throws EmptyArchive.
double novelty_score(const BehaviorCharacteristic& bc, std::span<const BehaviorCharacteristic> others, int k,
                     const BcDistance& distance = euclidean_distance);

struct Elite {
  int id = 0;
  std::optional<int> parent_id;
  LevelGrid level;
  PromptSpec prompt;
  BehaviorCharacteristic bc;
  double novelty_at_insertion = 0.0;
};

enum class AcceptRule { ExceedMinimum, ExceedMean };

struct NsConfig {
  int init_size = 30;
  int level_columns = 100;
  int k = 4;
  int iterations = 200;
  /// Parents are drawn from this top fraction of elites by current novelty.
  double parent_fraction = 0.25;
  int slice_min = 40;
  int slice_max = 80;
  /// Columns re-infilled around each junction.
  int seam_columns = 4;
  /// Columns of parent context fed to the generator before a slice.
  int context_columns = kWindowColumns;
  int infill_window_columns = 24;
  AcceptRule accept = AcceptRule::ExceedMinimum;
  /// Attempts per initial level before giving up on a pathless sample.
  int init_attempts = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const NsConfig& c);

/// Produces `columns` new columns following `context`.
class LevelGenerator {
 public:
  virtual ~LevelGenerator() = default;
  virtual LevelGrid generate(const LevelGrid& context, const PromptSpec& prompt, int columns, Rng& rng) = 0;
};

/// Rewrites columns [begin, end) of a level.
class SeamInfiller {
 public:
  virtual ~SeamInfiller() = default;
  virtual LevelGrid infill(const LevelGrid& level, int begin, int end) = 0;
};

class ModelGenerator final : public LevelGenerator {
 public:
  ModelGenerator(const ModelParams& params, const Vocab& vocab, SampleOptions options)
      : params_(params), vocab_(vocab), options_(options) {}
  LevelGrid generate(const LevelGrid& context, const PromptSpec& prompt, int columns, Rng& rng) override;

 private:
  const ModelParams& params_;
  const Vocab& vocab_;
  SampleOptions options_;
};

class ModelInfiller final : public SeamInfiller {
 public:
  ModelInfiller(const ModelParams& params, const Vocab& vocab, int window_columns)
      : params_(params), vocab_(vocab), window_columns_(window_columns) {}
  LevelGrid infill(const LevelGrid& level, int begin, int end) override;

 private:
  const ModelParams& params_;
  const Vocab& vocab_;
  int window_columns_;
};

struct MutationRecord {
  int slice_start = 0;
  int slice_width = 0;
  /// Columns that may differ from the parent: the slice plus its seams.
  int changed_begin = 0;
  int changed_end = 0;
  PromptSpec prompt;
};

struct Mutation {
  LevelGrid child;
  MutationRecord record;
};

/// Regenerate a random slice with a random prompt, then re-infill a seam
/// around each interior junction. Throws ParentTooNarrow.
Mutation mutate(const LevelGrid& parent, LevelGenerator& generator, SeamInfiller& infiller, Rng& rng,
                const NsConfig& config);

struct AcceptanceEvent {
  int iteration = 0;
  int parent_id = 0;
  bool accepted = false;
  /// Candidate novelty against the archive; absent for pathless children.
  std::optional<double> novelty;
  double threshold = 0.0;
  std::optional<int> child_id;
  MutationRecord mutation;
};

struct CoveragePoint {
  std::size_t archive_size = 0;
  double coverage = 0.0;
};

struct NsRun {
  std::vector<Elite> elites;
  std::vector<AcceptanceEvent> log;
  std::vector<CoveragePoint> coverage_curve;
};

/// Path-tile union of all elites on a height x columns grid, as a fraction
/// of cells. Throws EmptyArchive.
double coverage(std::span<const Elite> elites, int columns);

/// Novelty of each elite against all others.
std::vector<double> current_novelty(std::span<const Elite> elites, int k);

using MutationObserver = std::function<void(const LevelGrid& parent, const Mutation& mutation)>;

NsRun ns_run(const NsConfig& config, LevelGenerator& generator, SeamInfiller& infiller,
             const MutationObserver& observer = {});

/// One row per elite in insertion order.
std::string export_bcs(std::span<const Elite> elites);
std::vector<BehaviorCharacteristic> import_bcs(std::string_view csv);

/// elite_NNNN.txt/.json per elite, manifest.json, coverage.csv, bcs.csv.
void save_archive(const std::filesystem::path& dir, const NsRun& run, const nlohmann::json& manifest_extra);

}  // namespace mario
