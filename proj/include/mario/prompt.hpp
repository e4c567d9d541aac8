#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mario/corpus.hpp"
#include "mario/random.hpp"

namespace mario {

/// Prompt annotations are computed over windows of this many columns.
inline constexpr int kWindowColumns = 50;

struct FeatureCounts {
  int pipes = 0;
  int enemies = 0;
  int blocks = 0;
  /// Row of the highest 'X' tile, if any.
  std::optional<int> elevation_row;

  bool operator==(const FeatureCounts&) const = default;
};

enum class Quantity { No, Little, Some, Many };
enum class Elevation { Low, High };

/// Keyword band or exact count in [0, 1000].
using Amount = std::variant<Quantity, int>;

struct PromptSpec {
  std::optional<Amount> pipes;
  std::optional<Amount> enemies;
  std::optional<Amount> blocks;
  std::optional<Elevation> elevation;

  bool empty() const noexcept { return !pipes && !enemies && !blocks && !elevation; }
  bool operator==(const PromptSpec&) const = default;
};

/// Lower band edges; a count maps to the keyword of the largest edge it reaches.
struct QuantileConfig {
  int pipes_little = 1, pipes_some = 2, pipes_many = 5;
  int enemies_little = 1, enemies_some = 3, enemies_many = 7;
  // "no blocks" is not in the grammar, so 0 falls into "little".
  int blocks_some = 51, blocks_many = 76;
  /// "high" iff the highest 'X' sits on a row strictly less than this.
  int elevation_high_below_row = 7;

  bool operator==(const QuantileConfig&) const = default;
};

/// Parse key=value lines ('#' comments). Unknown keys are an error.
QuantileConfig parse_quantile_config(std::string_view text);
std::string render_quantile_config(const QuantileConfig& config);
QuantileConfig load_quantile_config(const std::filesystem::path& path);

/// Pipes count '<' tops, blocks count {X,S,?,Q,B,b}. Windows must be
/// kWindowColumns wide unless `any_width` is set.
FeatureCounts count_features(const LevelGrid& window, bool any_width = false);

PromptSpec quantize(const FeatureCounts& counts, const QuantileConfig& config = {});

std::string compose_prompt(const PromptSpec& spec);
PromptSpec parse_prompt(std::string_view text);

struct PromptMatch {
  std::optional<bool> pipes;
  std::optional<bool> enemies;
  std::optional<bool> blocks;
  std::optional<bool> elevation;

  /// True when every feature present in the spec matched.
  bool all() const noexcept;
};

PromptMatch prompt_match(const LevelGrid& level, const PromptSpec& spec, const QuantileConfig& config = {});

/// Every feature present, each keyword drawn uniformly from its grammar.
PromptSpec random_prompt(Rng& rng);

std::string to_string(Quantity q);
std::string to_string(Elevation e);

// Word-level tokenization of prompt text for the prompt encoder.

inline constexpr int kPromptVocabSize = 21;

/// Token ids for "," the keywords, the feature names and the digits 0-9.
std::vector<int> tokenize_prompt(std::string_view text);

struct WindowAnnotation {
  int start_col = 0;
  PromptSpec prompt;
};

/// Annotate every kWindowColumns-wide window starting at multiples of `stride`.
std::vector<WindowAnnotation> annotate_windows(const LevelGrid& level, int stride = 1,
                                               const QuantileConfig& config = {});

}  // namespace mario
