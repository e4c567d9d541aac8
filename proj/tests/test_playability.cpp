#include <algorithm>
#include <array>
#include <cmath>

#include "doctest.h"
#include "mario/error.hpp"
#include "mario/playability.hpp"
#include "support/oracles.hpp"

using namespace mario;

namespace {

void check_trajectory(const LevelGrid& level, const Path& path, const PhysicsRules& rules = {}) {
  for (std::size_t i = 0; i < path.size(); ++i) {
    const Point p = path[i];
    REQUIRE(p.x >= 0);
    REQUIRE(p.x < level.width());
    REQUIRE(p.y >= 0);
    REQUIRE(p.y < level.height());
    CHECK_FALSE(rules.is_solid(level.at(p.y, p.x)));
    CHECK_FALSE(rules.is_hazard(level.at(p.y, p.x)));
    if (i > 0) {
      CHECK(std::abs(p.x - path[i - 1].x) <= 1);
      CHECK(std::abs(p.y - path[i - 1].y) <= 1);
    }
  }
}

Path row_path(int row, int from, int to) {
  Path p;
  for (int x = from; x < to; ++x) p.push_back({x, row});
  return p;
}

LevelGrid with_gap(int width, int gap_col, int gap_width) {
  LevelGrid g = oracle::flat_level(width);
  for (int c = gap_col; c < gap_col + gap_width; ++c) {
    g.set(12, c, '-');
    g.set(13, c, '-');
  }
  return g;
}

}  // namespace

TEST_CASE("predicted path extraction") {
  CHECK(extract_predicted_path(oracle::flat_level(20)).empty());

  LevelGrid line = oracle::flat_level(20);
  for (int c = 0; c < 20; ++c) line.set(11, c, 'x');
  const Path p = extract_predicted_path(line);
  CHECK(p == row_path(11, 0, 20));

  // Two tiles in one column: the one nearer the previous point comes first.
  LevelGrid fork(3);
  fork.set(6, 0, 'x');
  fork.set(2, 1, 'x');
  fork.set(7, 1, 'x');
  CHECK(extract_predicted_path(fork) == Path{{0, 6}, {1, 7}, {1, 2}});

  Rng rng(21);
  for (int i = 0; i < 30; ++i) {
    const LevelGrid g = oracle::random_grid(rng, 40);
    Path got = extract_predicted_path(g);
    std::vector<Point> expect = oracle::path_tiles(g);
    REQUIRE(got.size() == expect.size());
    for (std::size_t j = 1; j < got.size(); ++j) CHECK(got[j - 1].x <= got[j].x);
    std::sort(got.begin(), got.end(), [](Point a, Point b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
    CHECK(got == expect);
  }
}

TEST_CASE("path contiguity") {
  LevelGrid g = oracle::flat_level(8);
  CHECK(path_contiguous(g, 2, 2));
  CHECK_FALSE(path_contiguous(g, 0, 1));
  for (int c = 0; c < 8; ++c) g.set(c < 4 ? 11 : 10, c, 'x');
  CHECK(path_contiguous(g, 0, 8));
  g.set(10, 5, '-');
  g.set(8, 5, 'x');
  CHECK_FALSE(path_contiguous(g, 0, 8));
  CHECK(path_contiguous(g, 0, 5));
  g.set(9, 5, 'x');
  CHECK(path_contiguous(g, 0, 8));
  g.set(10, 6, '-');
  CHECK_FALSE(path_contiguous(g, 0, 8));
  CHECK(path_contiguous(g, 7, 8));
  CHECK_THROWS_AS(path_contiguous(g, 0, 9), Error);
}

TEST_CASE("flat level is crossed along the row above the ground") {
  const LevelGrid flat = oracle::flat_level(20);
  CHECK(default_start(flat, {}) == Point{0, 11});
  const AgentResult r = simulate_astar(flat);
  CHECK(r.playable);
  CHECK_FALSE(r.budget_exhausted);
  CHECK(r.path == row_path(11, 0, 20));
  CHECK(r.best_effort_path == r.path);
  check_trajectory(flat, r.path);

  for (int width : {2, 7, 33, 100}) {
    const AgentResult w = simulate_astar(oracle::flat_level(width));
    CHECK(w.playable);
    CHECK(static_cast<int>(w.path.size()) == width);
  }
}

TEST_CASE("unreachable levels") {
  const LevelGrid wall = oracle::walled_level(20, 10, 5);
  const AgentResult r = simulate_astar(wall);
  CHECK_FALSE(r.playable);
  CHECK_FALSE(r.budget_exhausted);
  CHECK(r.path.empty());
  CHECK_FALSE(r.best_effort_path.empty());
  check_trajectory(wall, r.best_effort_path);
  for (Point p : r.best_effort_path) CHECK(p.x < 10);

  // A wall of exactly the jump height can be climbed.
  CHECK(simulate_astar(oracle::walled_level(20, 10, 4)).playable);

  const AgentResult boxed = simulate_astar(oracle::enclosed_spawn_level(20));
  CHECK_FALSE(boxed.playable);
  CHECK_FALSE(boxed.budget_exhausted);

  // A gap wider than max_gap is fatal; one at the limit is not.
  CHECK(simulate_astar(with_gap(30, 10, 4)).playable);
  CHECK_FALSE(simulate_astar(with_gap(30, 10, 8)).playable);

  // Enemies are static hazards: a column of them blocks like a wall.
  LevelGrid enemies = oracle::flat_level(20);
  for (int r = 0; r < 12; ++r) enemies.set(r, 10, 'E');
  CHECK_FALSE(simulate_astar(enemies).playable);
}

TEST_CASE("start validation and budget") {
  LevelGrid solid_col = oracle::flat_level(10);
  for (int r = 0; r < 14; ++r) solid_col.set(r, 0, 'X');
  try {
    simulate_astar(solid_col);
    FAIL("expected BadStart");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadStart);
  }
  try {
    simulate_astar(oracle::flat_level(10), {}, kDefaultNodeBudget, Point{0, 13});
    FAIL("expected BadStart");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadStart);
  }
  const AgentResult tiny = simulate_astar(oracle::flat_level(60), {}, 5);
  CHECK_FALSE(tiny.playable);
  CHECK(tiny.budget_exhausted);
  CHECK(tiny.expanded_nodes <= 5u);

  PhysicsRules bad;
  bad.hazard = "X";
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("agent is deterministic and stays out of solids on random levels") {
  Rng rng(22);
  for (int i = 0; i < 40; ++i) {
    LevelGrid g = oracle::flat_level(40);
    // Scatter blocks, pits and enemies over the flat level.
    for (int k = 0; k < 60; ++k) {
      const int r = static_cast<int>(uniform_int(rng, 0, 13));
      const int c = static_cast<int>(uniform_int(rng, 1, 39));
      const char t = "XSE--"[uniform_int(rng, 0, 4)];
      g.set(r, c, t);
    }
    const AgentResult a = simulate_astar(g, {}, 20000);
    for (int rep = 0; rep < 4; ++rep) {
      const AgentResult b = simulate_astar(g, {}, 20000);
      CHECK(b.playable == a.playable);
      CHECK(b.path == a.path);
      CHECK(b.best_effort_path == a.best_effort_path);
      CHECK(b.expanded_nodes == a.expanded_nodes);
    }
    check_trajectory(g, a.best_effort_path);
    if (a.playable) {
      CHECK(a.path.front().x == 0);
      CHECK(a.path.back().x == g.width() - 1);
    }
  }
}

TEST_CASE("path mae") {
  const Path a = row_path(10, 0, 20), b = row_path(12, 0, 20);
  CHECK(*path_mae(a, a) == 0.0);
  CHECK(*path_mae(a, b) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_FALSE(path_mae(row_path(10, 0, 5), row_path(10, 5, 10)).has_value());
  CHECK_FALSE(path_mae({}, a).has_value());

  // Only shared columns count; multiple points per column are averaged.
  Path multi = row_path(4, 5, 8);
  multi.push_back({7, 8});
  CHECK(*path_mae(multi, a) == doctest::Approx((6.0 + 6.0 + 4.0) / 3.0));

  Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    Path p, q;
    for (int x = 0; x < 30; ++x) {
      if (uniform_int(rng, 0, 3) > 0) p.push_back({x, static_cast<int>(uniform_int(rng, 0, 13))});
      if (uniform_int(rng, 0, 3) > 0) q.push_back({x, static_cast<int>(uniform_int(rng, 0, 13))});
    }
    const auto pq = path_mae(p, q), qp = path_mae(q, p);
    REQUIRE(pq.has_value() == qp.has_value());
    if (pq) {
      CHECK(*pq == *qp);
      CHECK(*pq >= 0.0);
    }
  }
}

TEST_CASE("playability report") {
  std::vector<LevelGrid> flats(4, oracle::flat_level(30));
  for (auto& f : flats) {
    for (int c = 0; c < 30; ++c) f.set(11, c, 'x');
  }
  const std::vector<std::string> ids = {"a", "b", "c", "d"};
  const PlayabilityReport all = playability_report(flats, ids);
  CHECK(all.playable_fraction == 1.0);
  CHECK(*all.mae_playable == 0.0);
  CHECK(*all.mae_all == 0.0);
  CHECK_FALSE(all.mae_not_playable.has_value());

  flats[2] = oracle::walled_level(30, 15, 6);
  for (int c = 0; c < 15; ++c) flats[2].set(9, c, 'x');
  const PlayabilityReport mixed = playability_report(flats, ids);
  CHECK(mixed.playable_fraction == 0.75);
  CHECK_FALSE(mixed.levels[2].playable);
  REQUIRE(mixed.mae_not_playable.has_value());
  CHECK(*mixed.mae_not_playable ==
        *path_mae(extract_predicted_path(flats[2]), mixed.levels[2].result.best_effort_path));
  CHECK(*mixed.mae_not_playable > 0.0);

  const std::string summary = summary_csv(mixed);
  CHECK(summary.rfind("levels,playable_fraction,mae_playable,mae_not_playable,mae_all\n", 0) == 0);
  const std::string rows = report_csv(mixed);
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 5);
  CHECK(rows.find("c,0,") != std::string::npos);

  CHECK_THROWS_AS(playability_report(std::span<const LevelGrid>{}, std::span<const std::string>{}), Error);
}

TEST_CASE("overlay rendering") {
  LevelGrid level = oracle::flat_level(4);
  level.set(10, 0, 'x');
  const Path pred = {{0, 11}, {1, 11}}, act = {{0, 11}, {2, 10}};
  const std::string art = render_overlay(level, pred, act);
  const LevelGrid back = parse_level([&] {
    std::string s = art;
    for (char& c : s) {
      if (c == 'A' || c == 'P' || c == '*') c = 'x';
    }
    return s;
  }());
  CHECK(back.width() == 4);
  CHECK(art.find('*') != std::string::npos);
  const std::size_t row11 = 11 * 5;
  CHECK(art.substr(row11, 4) == "*P--");
  CHECK(art.substr(10 * 5, 4) == "--A-");
}
