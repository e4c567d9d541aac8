#include "mario/playability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <sstream>

#include "mario/error.hpp"

namespace mario {

void PhysicsRules::validate() const {
  if (max_jump_height < 1 || max_gap < 1) throw Error(ErrorCode::BadConfig, "jump parameters must be >= 1");
  for (char c : solid) {
    if (hazard.find(c) != std::string::npos) {
      throw Error(ErrorCode::BadConfig, std::string("tile '") + c + "' is both solid and hazardous");
    }
  }
}

Path extract_predicted_path(const LevelGrid& level) {
  Path path;
  for (int c = 0; c < level.width(); ++c) {
    std::vector<int> rows;
    for (int r = 0; r < level.height(); ++r) {
      if (level.at(r, c) == kPath) rows.push_back(r);
    }
    if (rows.empty()) continue;
    if (!path.empty()) {
      const int prev = path.back().y;
      std::stable_sort(rows.begin(), rows.end(),
                       [prev](int a, int b) { return std::abs(a - prev) < std::abs(b - prev); });
    }
    for (int r : rows) path.push_back({c, r});
  }
  return path;
}

bool path_contiguous(const LevelGrid& level, int begin, int end) {
  if (begin < 0 || end > level.width() || begin > end) {
    throw Error(ErrorCode::OutOfBounds, "column range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                            ") outside a level of width " + std::to_string(level.width()));
  }
  std::vector<int> previous;
  for (int c = begin; c < end; ++c) {
    std::vector<int> rows;
    for (int r = 0; r < level.height(); ++r) {
      if (level.at(r, c) == kPath) rows.push_back(r);
    }
    if (rows.empty()) return false;
    if (c > begin) {
      const bool linked = std::any_of(rows.begin(), rows.end(), [&](int r) {
        return std::any_of(previous.begin(), previous.end(), [r](int p) { return std::abs(r - p) <= 1; });
      });
      if (!linked) return false;
    }
    previous = std::move(rows);
  }
  return true;
}

namespace {

class Grid {
 public:
  Grid(const LevelGrid& level, const PhysicsRules& rules) : level_(level), rules_(rules) {}

  int width() const { return level_.width(); }
  bool in_bounds(int x, int y) const { return x >= 0 && x < level_.width() && y >= 0 && y < level_.height(); }
  bool solid(int x, int y) const { return in_bounds(x, y) && rules_.is_solid(level_.at(y, x)); }
  bool passable(int x, int y) const {
    return in_bounds(x, y) && !rules_.is_solid(level_.at(y, x)) && !rules_.is_hazard(level_.at(y, x));
  }
  bool supported(int x, int y) const { return y + 1 < level_.height() && solid(x, y + 1); }
  /// Diagonal steps may not squeeze between two solid corners.
  bool can_step(int x, int y, int dx, int dy) const {
    if (!passable(x + dx, y + dy)) return false;
    if (dx != 0 && dy != 0 && solid(x + dx, y) && solid(x, y + dy)) return false;
    return true;
  }

 private:
  const LevelGrid& level_;
  const PhysicsRules& rules_;
};

struct StateCodec {
  int height;
  int phases;   // grounded, rising 1..max_jump, falling
  int air;      // 0..max_gap + 1

  int phase_code(const AgentState& s) const {
    switch (s.phase) {
      case Phase::Grounded: return 0;
      case Phase::Rising: return s.rise;
      case Phase::Falling: return phases - 1;
    }
    return 0;
  }
  std::size_t encode(const AgentState& s) const {
    return ((static_cast<std::size_t>(s.x) * height + s.y) * phases + phase_code(s)) * air + s.air_dx;
  }
  AgentState decode(std::size_t i) const {
    AgentState s;
    s.air_dx = static_cast<int>(i % air);
    i /= air;
    const int pc = static_cast<int>(i % phases);
    i /= phases;
    s.y = static_cast<int>(i % height);
    s.x = static_cast<int>(i / height);
    if (pc == 0) {
      s.phase = Phase::Grounded;
    } else if (pc == phases - 1) {
      s.phase = Phase::Falling;
    } else {
      s.phase = Phase::Rising;
      s.rise = pc;
    }
    return s;
  }
};

struct OpenEntry {
  int f;
  int x;
  int y;
  std::uint64_t seq;
  std::size_t state;
};

// Priority: smaller f, then larger x, then nearer the ground (larger row),
// then earlier insertion.
struct OpenOrder {
  bool operator()(const OpenEntry& a, const OpenEntry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.seq > b.seq;
  }
};

std::vector<AgentState> successors(const AgentState& s, const Grid& g, const PhysicsRules& rules) {
  std::vector<AgentState> out;
  const int air_budget = rules.max_gap + 1;
  auto settle = [&](AgentState n) {
    if (n.phase == Phase::Falling && g.supported(n.x, n.y)) {
      n.phase = Phase::Grounded;
      n.rise = 0;
      n.air_dx = 0;
    }
    out.push_back(n);
  };
  switch (s.phase) {
    case Phase::Grounded:
      for (int dx : {1, -1}) {
        if (!g.can_step(s.x, s.y, dx, 0)) continue;
        settle({s.x + dx, s.y, g.supported(s.x + dx, s.y) ? Phase::Grounded : Phase::Falling, 0, 0});
      }
      for (int dx : {1, 0, -1}) {
        if (g.can_step(s.x, s.y, dx, -1)) out.push_back({s.x + dx, s.y - 1, Phase::Rising, 1, std::abs(dx)});
      }
      break;
    case Phase::Rising:
      for (int dx : {1, 0, -1}) {
        const int air = s.air_dx + std::abs(dx);
        if (air > air_budget) continue;
        if (s.rise < rules.max_jump_height && g.can_step(s.x, s.y, dx, -1)) {
          out.push_back({s.x + dx, s.y - 1, Phase::Rising, s.rise + 1, air});
        }
        if (dx == 0 || g.can_step(s.x, s.y, dx, 0)) settle({s.x + dx, s.y, Phase::Falling, 0, air});
      }
      break;
    case Phase::Falling:
      for (int dx : {1, 0, -1}) {
        const int air = s.air_dx + std::abs(dx);
        if (air > air_budget) continue;
        if (g.can_step(s.x, s.y, dx, 1)) settle({s.x + dx, s.y + 1, Phase::Falling, 0, air});
      }
      break;
  }
  return out;
}

Path reconstruct(std::size_t goal, const std::vector<std::size_t>& parent, const StateCodec& codec) {
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<Point> reversed;
  for (std::size_t i = goal; i != kNone; i = parent[i]) {
    const AgentState s = codec.decode(i);
    const Point p{s.x, s.y};
    if (reversed.empty() || !(reversed.back() == p)) reversed.push_back(p);
  }
  return Path(reversed.rbegin(), reversed.rend());
}

}  // namespace

Point default_start(const LevelGrid& level, const PhysicsRules& rules) {
  const Grid g(level, rules);
  for (int y = level.height() - 1; y >= 0; --y) {
    if (g.passable(0, y) && g.supported(0, y)) return {0, y};
  }
  for (int y = level.height() - 1; y >= 0; --y) {
    if (g.passable(0, y)) return {0, y};
  }
  throw Error(ErrorCode::BadStart, "column 0 has no passable tile");
}

AgentResult simulate_astar(const LevelGrid& level, const PhysicsRules& rules, std::size_t node_budget,
                           std::optional<Point> start) {
  rules.validate();
  const Grid g(level, rules);
  const Point origin = start ? *start : default_start(level, rules);
  if (!g.passable(origin.x, origin.y)) {
    throw Error(ErrorCode::BadStart, "start (" + std::to_string(origin.x) + ", " + std::to_string(origin.y) +
                                         ") is not a passable tile");
  }
  const StateCodec codec{level.height(), rules.max_jump_height + 2, rules.max_gap + 2};
  const std::size_t num_states =
      static_cast<std::size_t>(level.width()) * codec.height * codec.phases * codec.air;
  constexpr int kInf = std::numeric_limits<int>::max();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<int> cost(num_states, kInf);
  std::vector<std::size_t> parent(num_states, kNone);
  std::vector<bool> closed(num_states, false);
  std::priority_queue<OpenEntry, std::vector<OpenEntry>, OpenOrder> open;
  std::uint64_t seq = 0;
  const int goal_x = level.width() - 1;

  AgentState first{origin.x, origin.y, g.supported(origin.x, origin.y) ? Phase::Grounded : Phase::Falling, 0, 0};
  const std::size_t first_id = codec.encode(first);
  cost[first_id] = 0;
  open.push({goal_x - first.x, first.x, first.y, seq++, first_id});

  AgentResult result;
  std::size_t best = first_id;
  int best_x = -1;
  while (!open.empty()) {
    const OpenEntry top = open.top();
    open.pop();
    if (closed[top.state]) continue;
    if (result.expanded_nodes >= node_budget) {
      result.budget_exhausted = true;
      break;
    }
    closed[top.state] = true;
    ++result.expanded_nodes;
    const AgentState s = codec.decode(top.state);
    if (!g.passable(s.x, s.y)) throw Error(ErrorCode::BadStart, "agent entered a blocked tile");
    if (s.x > best_x) {
      best_x = s.x;
      best = top.state;
    }
    if (s.x == goal_x) {
      result.playable = true;
      result.path = reconstruct(top.state, parent, codec);
      result.best_effort_path = result.path;
      return result;
    }
    const int g_next = cost[top.state] + 1;
    for (const AgentState& n : successors(s, g, rules)) {
      const std::size_t id = codec.encode(n);
      if (closed[id] || g_next >= cost[id]) continue;
      cost[id] = g_next;
      parent[id] = top.state;
      open.push({g_next + (goal_x - n.x), n.x, n.y, seq++, id});
    }
  }
  result.best_effort_path = reconstruct(best, parent, codec);
  return result;
}

std::optional<double> path_mae(const Path& predicted, const Path& actual) {
  auto column_means = [](const Path& p) {
    std::map<int, std::pair<double, int>> acc;
    for (const Point& pt : p) {
      auto& [sum, n] = acc[pt.x];
      sum += pt.y;
      ++n;
    }
    std::map<int, double> means;
    for (const auto& [x, sn] : acc) means[x] = sn.first / sn.second;
    return means;
  };
  const auto a = column_means(predicted), b = column_means(actual);
  double total = 0.0;
  int shared = 0;
  for (const auto& [x, ya] : a) {
    auto it = b.find(x);
    if (it == b.end()) continue;
    total += std::abs(ya - it->second);
    ++shared;
  }
  if (shared == 0) return std::nullopt;
  return total / shared;
}

PlayabilityReport playability_report(std::span<const LevelGrid> levels, std::span<const std::string> ids,
                                     const PhysicsRules& rules, int runs_per_level, std::size_t node_budget) {
  if (levels.empty()) throw Error(ErrorCode::EmptyList, "no levels to evaluate");
  if (!ids.empty() && ids.size() != levels.size()) throw Error(ErrorCode::ShapeMismatch, "one id per level required");
  if (runs_per_level < 1) throw Error(ErrorCode::BadConfig, "runs_per_level must be >= 1");
  PlayabilityReport report;
  std::vector<double> playable_maes, failed_maes, all_maes;
  std::size_t playable = 0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    LevelPlayRow row;
    row.id = ids.empty() ? std::to_string(i) : ids[i];
    for (int r = 0; r < runs_per_level; ++r) {
      const std::size_t budget = node_budget * static_cast<std::size_t>(r + 1) / static_cast<std::size_t>(runs_per_level);
      row.result = simulate_astar(levels[i], rules, budget);
      if (row.result.playable) break;
    }
    row.playable = row.result.playable;
    row.budget_exhausted = row.result.budget_exhausted;
    row.expanded_nodes = row.result.expanded_nodes;
    row.mae = path_mae(extract_predicted_path(levels[i]), row.result.best_effort_path);
    if (row.playable) ++playable;
    if (row.mae) {
      (row.playable ? playable_maes : failed_maes).push_back(*row.mae);
      all_maes.push_back(*row.mae);
    }
    report.levels.push_back(std::move(row));
  }
  auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  report.playable_fraction = static_cast<double>(playable) / static_cast<double>(levels.size());
  report.mae_playable = mean(playable_maes);
  report.mae_not_playable = mean(failed_maes);
  report.mae_all = mean(all_maes);
  return report;
}

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream out;
  out.precision(10);
  out << *v;
  return out.str();
}

}  // namespace

std::string report_csv(const PlayabilityReport& report) {
  std::ostringstream out;
  out << "level_id,playable,budget_exhausted,mae,expanded_nodes\n";
  for (const auto& r : report.levels) {
    out << r.id << ',' << (r.playable ? 1 : 0) << ',' << (r.budget_exhausted ? 1 : 0) << ',' << fmt(r.mae) << ','
        << r.expanded_nodes << '\n';
  }
  return out.str();
}

std::string summary_csv(const PlayabilityReport& report) {
  std::ostringstream out;
  out << "levels,playable_fraction,mae_playable,mae_not_playable,mae_all\n";
  out << report.levels.size() << ',' << fmt(report.playable_fraction) << ',' << fmt(report.mae_playable) << ','
      << fmt(report.mae_not_playable) << ',' << fmt(report.mae_all) << '\n';
  return out.str();
}

std::string render_overlay(const LevelGrid& level, const Path& predicted, const Path& actual) {
  std::vector<std::string> rows(level.rows().begin(), level.rows().end());
  for (auto& row : rows) std::replace(row.begin(), row.end(), kPath, kEmpty);
  auto inside = [&](const Point& p) { return p.y >= 0 && p.y < level.height() && p.x >= 0 && p.x < level.width(); };
  for (const Point& p : predicted) {
    if (inside(p)) rows[p.y][p.x] = 'P';
  }
  for (const Point& p : actual) {
    if (!inside(p)) continue;
    char& cell = rows[p.y][p.x];
    cell = (cell == 'P' || cell == '*') ? '*' : 'A';
  }
  std::string out;
  for (const auto& row : rows) out += row + '\n';
  return out;
}

}  // namespace mario
