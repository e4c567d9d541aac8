#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mario/corpus.hpp"

namespace mario {

struct PhysicsRules {
  int max_jump_height = 4;
  /// Widest gap cleared by a full jump. A jump may move at most max_gap + 1
  /// columns horizontally before landing.
  int max_gap = 4;
  std::string solid = "XS?Q<>[]Bb";
  std::string hazard = "E";

  /// Throws BadConfig.
  void validate() const;
  bool is_solid(char tile) const noexcept { return solid.find(tile) != std::string::npos; }
  bool is_hazard(char tile) const noexcept { return hazard.find(tile) != std::string::npos; }
};

enum class Phase : std::uint8_t { Grounded, Rising, Falling };

struct AgentState {
  int x = 0;
  int y = 0;
  Phase phase = Phase::Grounded;
  /// Rising steps taken in the current jump.
  int rise = 0;
  /// Horizontal moves made since leaving the ground.
  int air_dx = 0;

  bool operator==(const AgentState&) const = default;
};

struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

using Path = std::vector<Point>;

struct AgentResult {
  bool playable = false;
  /// Search stopped at the node budget without exhausting the state space.
  bool budget_exhausted = false;
  /// Empty unless playable.
  Path path;
  /// Trajectory to the rightmost state reached; equals `path` when playable.
  Path best_effort_path;
  std::size_t expanded_nodes = 0;
};

/// All 'x' tiles, column by column. Within a column the tile closest to the
/// previous point comes first (ties: smaller row).
Path extract_predicted_path(const LevelGrid& level);

/// True when every column in [begin, end) holds a path tile and each pair of
/// neighbouring columns has path tiles at most one row apart. Throws
/// OutOfBounds for a range outside the level.
bool path_contiguous(const LevelGrid& level, int begin, int end);

/// Lowest passable tile in column 0 standing on a solid tile, else the lowest
/// passable tile. Throws BadStart when column 0 has no passable tile.
Point default_start(const LevelGrid& level, const PhysicsRules& rules);

inline constexpr std::size_t kDefaultNodeBudget = 200000;

/// A* over AgentState from `start` to any state in the last column. Moves:
/// walk one column, jump (up to max_jump_height rising steps, each optionally
/// drifting one column), apex, and fall one row per step. Hazards and solids
/// are never entered; leaving the bottom row is death. Throws BadStart.
AgentResult simulate_astar(const LevelGrid& level, const PhysicsRules& rules = {},
                           std::size_t node_budget = kDefaultNodeBudget, std::optional<Point> start = std::nullopt);

/// Mean |y_pred - y_act| over columns visited by both paths, using each
/// path's per-column mean row. nullopt when no column is shared.
std::optional<double> path_mae(const Path& predicted, const Path& actual);

struct LevelPlayRow {
  std::string id;
  bool playable = false;
  bool budget_exhausted = false;
  /// Against the agent path, or its best-effort path when not playable.
  std::optional<double> mae;
  std::size_t expanded_nodes = 0;
  AgentResult result;
};

struct PlayabilityReport {
  std::vector<LevelPlayRow> levels;
  double playable_fraction = 0.0;
  std::optional<double> mae_playable;
  std::optional<double> mae_not_playable;
  std::optional<double> mae_all;
};

/// Run r (0-based) of each level uses node_budget * (r + 1) / runs nodes; a
/// level is playable if any run completes it.
PlayabilityReport playability_report(std::span<const LevelGrid> levels, std::span<const std::string> ids,
                                     const PhysicsRules& rules = {}, int runs_per_level = 5,
                                     std::size_t node_budget = kDefaultNodeBudget);

/// level_id,playable,budget_exhausted,mae,expanded_nodes
std::string report_csv(const PlayabilityReport& report);
/// levels,playable_fraction,mae_playable,mae_not_playable,mae_all
std::string summary_csv(const PlayabilityReport& report);

/// Level with path tiles cleared, then agent tiles 'A', predicted tiles 'P',
/// and '*' where both agree.
std::string render_overlay(const LevelGrid& level, const Path& predicted, const Path& actual);

}  // namespace mario
