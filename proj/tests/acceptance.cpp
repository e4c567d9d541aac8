// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Pass criterion numbers as arguments to run
// a subset. Trained checkpoints, the novelty-search archive and a summary are
// written under $MARIO_ACCEPTANCE_OUT (default ./acceptance_artifacts).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mario/checkpoint.hpp"
#include "mario/corpus.hpp"
#include "mario/error.hpp"
#include "mario/evaluation.hpp"
#include "mario/generation.hpp"
#include "mario/model.hpp"
#include "mario/novelty.hpp"
#include "mario/optim.hpp"
#include "mario/playability.hpp"
#include "mario/prompt.hpp"
#include "mario/tokenizer.hpp"
#include "mario/training.hpp"
#include "support/oracles.hpp"

using namespace mario;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Training recipes for the models the later criteria share.
constexpr int kTrainSeeds = 3;
constexpr int kGeneratorMaxSteps = 5000;
constexpr int kGeneratorEvalEvery = 100;
constexpr double kGeneratorStopAcc = 0.6;
constexpr int kNsGeneratorSteps = 1000;
constexpr int kInfillWindow = 24;
constexpr int kInfillSteps = 4000;
constexpr int kInfillMaxSpan = 4;

class Context {
 public:
  Context() : vocab_(build_char_vocab()) {
    const char* env = std::getenv("MARIO_ACCEPTANCE_OUT");
    out_ = fs::absolute(env ? env : "acceptance_artifacts");
    fs::create_directories(out_);
    corpus_ = load_corpus(fs::path(MARIO_DATA_DIR) / "corpus" / "manifest.txt");
    split_ = split_corpus(corpus_.stitched, TrainConfig{}.val_fraction);
  }

  const Corpus& corpus() const { return corpus_; }
  const CorpusSplit& split() const { return split_; }
  const Vocab& vocab() const { return vocab_; }
  const fs::path& out() const { return out_; }

  TrainConfig generator_train_config(std::uint64_t seed) const {
    TrainConfig tc;
    tc.steps = kGeneratorMaxSteps;
    tc.eval_every = kGeneratorEvalEvery;
    tc.stop_tile_acc = kGeneratorStopAcc;
    tc.seed = seed;
    return tc;
  }

  ModelConfig generator_model_config(std::uint64_t seed) const {
    ModelConfig mc;
    mc.seed = seed;
    return mc;
  }

  /// Early-stopped generator runs, one per seed.
  std::vector<TrainState>& seed_runs() {
    if (seed_runs_.empty()) {
      for (int s = 0; s < kTrainSeeds; ++s) {
        const TrainConfig tc = generator_train_config(static_cast<std::uint64_t>(s));
        TrainState st = start_training(generator_model_config(static_cast<std::uint64_t>(s)), tc);
        train(st, split_, vocab_, QuantileConfig{}, tc);
        seed_runs_.push_back(std::move(st));
      }
    }
    return seed_runs_;
  }

  /// Seed 0's run continued to a fixed step count.
  const ModelParams& generator() {
    if (!generator_) {
      const auto t0 = Clock::now();
      TrainState st = seed_runs().front();
      st.stopped_early = false;
      TrainConfig tc = generator_train_config(0);
      tc.steps = kNsGeneratorSteps;
      tc.stop_tile_acc = 0.0;
      tc.eval_every = 0;
      train(st, split_, vocab_, QuantileConfig{}, tc);
      save_checkpoint(out_ / "generator.ckpt", {st.params, vocab_, st.step, st.opt, {{"train", to_json(tc)}}});
      generator_ = st.params;
      std::cout << "  (generator trained to step " << st.step << " in " << num(seconds_since(t0), 1) << " s)\n";
    }
    return *generator_;
  }

  const ModelParams& infill() {
    if (!infill_) {
      const auto t0 = Clock::now();
      ModelConfig mc;
      mc.kind = ModelKind::Infill;
      mc.context_len = kLevelHeight * kInfillWindow;
      mc.seed = 1;
      TrainConfig tc;
      tc.steps = kInfillSteps;
      tc.eval_every = 500;
      tc.infill_window_columns = kInfillWindow;
      tc.infill_max_span_columns = kInfillMaxSpan;
      tc.seed = 1;
      TrainState st = start_training(mc, tc);
      train(st, split_, vocab_, QuantileConfig{}, tc);
      save_checkpoint(out_ / "infill.ckpt", {st.params, vocab_, st.step, st.opt, {{"train", to_json(tc)}}});
      infill_ = st.params;
      std::cout << "  (infill model trained for " << st.step << " steps in " << num(seconds_since(t0), 1)
                << " s, val tile acc " << num(st.evals.back().tile_acc) << ", path acc "
                << num(st.evals.back().path_acc) << ")\n";
    }
    return *infill_;
  }

  void record(const std::string& line) { summary_ << line << "\n"; }
  void write_summary() const { write_text_file(out_ / "summary.txt", summary_.str()); }

 private:
  Vocab vocab_;
  fs::path out_;
  Corpus corpus_;
  CorpusSplit split_;
  std::vector<TrainState> seed_runs_;
  std::optional<ModelParams> generator_;
  std::optional<ModelParams> infill_;
  std::ostringstream summary_;
};

// 1 ------------------------------------------------------------------------
Outcome format_roundtrips(Context& ctx) {
  const auto t0 = Clock::now();
  int failures = 0, levels = 0;
  for (std::size_t i = 0; i < ctx.corpus().levels.size(); ++i) {
    const LevelGrid& g = ctx.corpus().levels[i];
    const std::string text = read_text_file(ctx.corpus().files[i]);
    failures += render_ascii(parse_level(text)) != text;
    failures += parse_level(render_ascii(g)) != g;
    failures += unflatten(flatten(g)) != g;
    ++levels;
  }
  Rng rng(101);
  for (int i = 0; i < 1000; ++i) {
    const LevelGrid g = oracle::random_grid(rng, static_cast<int>(uniform_int(rng, 1, 200)));
    failures += parse_level(render_ascii(g)) != g;
    failures += unflatten(flatten(g)) != g;
    failures += flatten(g) != oracle::flatten(g);
  }
  const double t = seconds_since(t0);
  return {failures == 0 && t < 5.0, std::to_string(levels) + " corpus file(s) (" +
                                        std::to_string(ctx.corpus().stitched.width()) +
                                        " columns) + 1000 random grids, " + std::to_string(failures) +
                                        " mismatches, " + num(t, 2) + " s (limit 5 s)"};
}

// 2 ------------------------------------------------------------------------
Outcome tokenizer_roundtrips(Context& ctx) {
  const auto t0 = Clock::now();
  const LevelGrid& all = ctx.corpus().stitched;
  const std::vector<std::string> training = {flatten(all)};
  const Vocab bpe = train_bpe(training, 64);
  const Vocab chars = build_char_vocab();
  int windows = 0, failures = 0;
  std::size_t char_tokens = 0, bpe_tokens = 0;
  for (int s = 0; s + kWindowColumns <= all.width(); ++s) {
    const std::string text = flatten(slice(all, s, kWindowColumns));
    const TokenSequence a = encode(text, chars), b = encode(text, bpe);
    failures += decode(a, chars) != text;
    failures += decode(b, bpe) != text;
    char_tokens += a.size();
    bpe_tokens += b.size();
    ++windows;
  }
  const double t = seconds_since(t0);
  return {failures == 0 && bpe.merges().size() == 64 && t < 30.0,
          std::to_string(windows) + " windows x {char, BPE-64}, " + std::to_string(failures) +
              " mismatches, BPE compresses " + num(static_cast<double>(char_tokens) / bpe_tokens, 2) + "x, " +
              num(t, 1) + " s (limit 30 s)"};
}

// 3 ------------------------------------------------------------------------
LevelGrid window_with(int pipes, int enemies, int blocks) {
  LevelGrid g(kWindowColumns);
  int cell = 0;
  auto put = [&](char t, int n) {
    for (int i = 0; i < n; ++i, ++cell) g.set(cell / kWindowColumns, cell % kWindowColumns, t);
  };
  put('<', pipes);
  put('E', enemies);
  put('S', blocks);
  return g;
}

Outcome prompt_anchors(Context& ctx) {
  struct Anchor {
    const char* feature;
    int count;
    Quantity expected;
  };
  const std::vector<Anchor> anchors = {
      {"pipes", 0, Quantity::No},        {"pipes", 1, Quantity::Little},     {"pipes", 2, Quantity::Some},
      {"pipes", 5, Quantity::Many},      {"enemies", 0, Quantity::No},       {"enemies", 1, Quantity::Little},
      {"enemies", 3, Quantity::Some},    {"enemies", 7, Quantity::Many},     {"blocks", 0, Quantity::Little},
      {"blocks", 50, Quantity::Little},  {"blocks", 75, Quantity::Some},     {"blocks", 176, Quantity::Many},
  };
  int anchor_fail = 0;
  for (const Anchor& a : anchors) {
    const std::string f = a.feature;
    const LevelGrid w = window_with(f == "pipes" ? a.count : 0, f == "enemies" ? a.count : 0,
                                    f == "blocks" ? a.count : 0);
    const PromptSpec s = quantize(count_features(w));
    const auto& amount = f == "pipes" ? s.pipes : f == "enemies" ? s.enemies : s.blocks;
    if (!amount || std::get<Quantity>(*amount) != a.expected) ++anchor_fail;
  }
  const auto windows = annotate_windows(ctx.corpus().stitched, 1);
  int consistent = 0;
  for (const auto& a : windows) {
    consistent += prompt_match(slice(ctx.corpus().stitched, a.start_col, kWindowColumns), a.prompt).all();
  }
  return {anchor_fail == 0 && consistent == static_cast<int>(windows.size()) && !windows.empty(),
          std::to_string(anchors.size() - anchor_fail) + "/" + std::to_string(anchors.size()) +
              " anchors, annotation self-consistent on " + std::to_string(consistent) + "/" +
              std::to_string(windows.size()) + " corpus windows"};
}

// 4 ------------------------------------------------------------------------
Outcome gradient_check(Context&) {
  const auto t0 = Clock::now();
  const oracle::GradCheck g = oracle::gradient_check(ModelKind::Generator);
  const oracle::GradCheck i = oracle::gradient_check(ModelKind::Infill);
  const double t = seconds_since(t0);
  const double worst = std::max(g.worst_rel_error, i.worst_rel_error);
  return {worst <= 1e-4 && t < 60.0,
          "worst relative error " + sci(worst) + " (limit 1e-4) over " +
              std::to_string(g.tensors_checked + i.tensors_checked) + " tensors / " +
              std::to_string(g.entries_checked + i.entries_checked) + " entries, " + num(t, 1) + " s (limit 60 s)"};
}

// 5 ------------------------------------------------------------------------
Outcome analytic_loss(Context&) {
  ModelConfig c;
  c.context_len = kLevelHeight * 4;
  c.embed_dim = 16;
  c.num_heads = 2;
  c.seed = 5;
  ModelParams p = init_model(c);
  p.head.weight.setZero();
  p.head.bias.setZero();
  Rng rng(55);
  TrainingExample ex;
  for (int i = 0; i < 40; ++i) {
    ex.tokens.push_back(static_cast<TokenId>(uniform_int(rng, 0, 13)));
    ex.targets.push_back(static_cast<TokenId>(uniform_int(rng, 0, 13)));
  }
  ex.prompt_tokens = tokenize_prompt("many pipes, some enemies");
  const std::vector<TrainingExample> batch = {ex};
  const double loss_err = std::abs(batch_loss(p, batch) - std::log(static_cast<double>(c.vocab_size)));

  Matrix x = Matrix::Zero(1, 1);
  std::vector<Matrix*> params = {&x};
  const std::vector<const Matrix*> shapes = {&x};
  OptState opt = init_opt_state(shapes, AdamConfig{0.01});
  int converged = -1;
  for (int step = 1; step <= 2000 && converged < 0; ++step) {
    Matrix g = 2.0 * (x.array() - 3.0).matrix();
    const std::vector<const Matrix*> grads = {&g};
    adam_step(params, grads, opt);
    if (std::abs(x(0, 0) - 3.0) < 1e-6) converged = step;
  }
  return {loss_err <= 1e-9 && converged > 0,
          "|loss - ln 18| = " + sci(loss_err) + " (limit 1e-9); Adam on (x-3)^2 within 1e-6 after " +
              (converged > 0 ? std::to_string(converged) : std::string("no")) + " steps (limit 2000)"};
}

// 6 ------------------------------------------------------------------------
Outcome trainability(Context& ctx) {
  const auto t0 = Clock::now();
  auto& runs = ctx.seed_runs();
  const double t = seconds_since(t0);
  const TrainConfig tc = ctx.generator_train_config(0);
  const auto val = validation_set(ModelKind::Generator, ctx.split().val, ctx.vocab(), QuantileConfig{}, tc);
  const double baseline = unigram_baseline(ctx.split().train, val, ctx.vocab());
  std::vector<double> accs;
  std::string per_seed;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const double acc = runs[s].evals.back().tile_acc;
    accs.push_back(acc);
    per_seed += (s ? ", " : "") + num(acc) + "@" + std::to_string(runs[s].step);
    write_text_file(ctx.out() / ("generator_seed" + std::to_string(s) + "_evals.csv"), evals_csv(runs[s].evals));
  }
  std::sort(accs.begin(), accs.end());
  const double median = accs[accs.size() / 2];
  ctx.record("generator_unigram_baseline " + num(baseline));
  ctx.record("generator_median_val_tile_acc " + num(median));
  return {median > baseline && median > 0.6 && t <= 1800.0,
          "median val tile acc " + num(median) + " (seeds: " + per_seed + " steps) vs unigram baseline " +
              num(baseline) + " and 0.6, " + num(t, 0) + " s (limit 1800 s)"};
}

// 7 ------------------------------------------------------------------------
Outcome temperature_diversity(Context& ctx) {
  Rng toy_rng(77);
  const LevelGrid toy = oracle::random_grid(toy_rng, 200);
  int oracle_fail = 0;
  for (int i = 0; i < 40; ++i) {
    const int w = static_cast<int>(uniform_int(toy_rng, 1, 50));
    LevelGrid q = i % 2 ? slice(toy, static_cast<int>(uniform_int(toy_rng, 0, 200 - w)), w)
                        : oracle::random_grid(toy_rng, w);
    if (i % 4 == 1) q.set(0, 0, q.at(0, 0) == '-' ? 'X' : '-');
    const ClosestSample got = closest_training_sample(q, toy), want = oracle::closest(q, toy);
    oracle_fail += got.start_col != want.start_col || got.distance != want.distance;
  }

  const ModelParams& gen = ctx.generator();
  auto mean_distance = [&](double temperature) {
    Rng rng(700);
    SampleOptions so;
    so.temperature = temperature;
    double sum = 0.0;
    for (int i = 0; i < 50; ++i) {
      const LevelGrid level =
          sample_level(gen, ctx.vocab(), canonical_seed_column(), random_prompt(rng), kWindowColumns, so, rng);
      sum += closest_training_sample(level, ctx.split().train).distance;
    }
    return sum / 50.0;
  };
  const double low = mean_distance(1.0), high = mean_distance(2.8);
  ctx.record("closest_window_distance_t1.0 " + num(low));
  ctx.record("closest_window_distance_t2.8 " + num(high));
  return {high > low && oracle_fail == 0, "mean closest-window Hamming distance " + num(high) + " at T=2.8 vs " +
                                              num(low) + " at T=1.0 (50 samples each); oracle mismatches " +
                                              std::to_string(oracle_fail) + "/40"};
}

// 8 ------------------------------------------------------------------------
Outcome playability(Context&) {
  std::vector<std::string> failed;
  const LevelGrid flat = oracle::flat_level(20);
  const AgentResult f = simulate_astar(flat);
  if (!f.playable || f.path.size() != 20) failed.push_back("flat");
  if (simulate_astar(oracle::walled_level(20, 10, 5)).playable) failed.push_back("wall");
  if (simulate_astar(oracle::enclosed_spawn_level(20)).playable) failed.push_back("enclosed");

  Rng rng(88);
  for (int i = 0; i < 20; ++i) {
    LevelGrid g = oracle::flat_level(40);
    for (int k = 0; k < 60; ++k) {
      g.set(static_cast<int>(uniform_int(rng, 0, 13)), static_cast<int>(uniform_int(rng, 1, 39)),
            "XSE--"[uniform_int(rng, 0, 4)]);
    }
    const AgentResult first = simulate_astar(g, {}, 20000);
    for (int r = 0; r < 4; ++r) {
      const AgentResult again = simulate_astar(g, {}, 20000);
      if (again.playable != first.playable || again.path != first.path ||
          again.best_effort_path != first.best_effort_path || again.expanded_nodes != first.expanded_nodes) {
        failed.push_back("determinism");
        r = 4;
        i = 20;
      }
    }
  }
  Path a, b;
  for (int x = 0; x < 30; ++x) {
    a.push_back({x, 10});
    b.push_back({x, 12});
  }
  const auto same = path_mae(a, a), offset = path_mae(a, b);
  if (!same || *same != 0.0) failed.push_back("mae identical");
  if (!offset || *offset != 2.0) failed.push_back("mae offset");
  std::string detail = "flat (path " + std::to_string(f.path.size()) + "/20), walled, enclosed spawn, 5-run determinism, "
                       "MAE 0.0/2.0";
  if (!failed.empty()) {
    detail += "; failed:";
    for (const auto& s : failed) detail += " " + s;
  }
  return {failed.empty(), detail};
}

// 9 ------------------------------------------------------------------------
Outcome novelty_oracles(Context&) {
  Rng rng(99);
  double bc_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int width = static_cast<int>(uniform_int(rng, 1, 150));
    Path path;
    for (int x = 0; x < width; ++x) {
      const int n = static_cast<int>(uniform_int(rng, 0, 2));
      for (int k = 0; k < n; ++k) path.push_back({x, static_cast<int>(uniform_int(rng, 0, 13))});
    }
    if (path.empty()) path.push_back({static_cast<int>(uniform_int(rng, 0, width - 1)), 6});
    const auto got = behavior_characteristic(path, width);
    const auto want = oracle::bc(path, width);
    for (std::size_t j = 0; j < got.size(); ++j) bc_err = std::max(bc_err, std::abs(got[j] - want[j]));
  }
  double knn_err = 0.0;
  int archives = 0;
  for (int size = 1; size <= 500; size += (size < 20 ? 1 : 37)) {
    std::vector<BehaviorCharacteristic> archive;
    for (int i = 0; i < size; ++i) {
      BehaviorCharacteristic v(100);
      for (double& x : v) x = uniform01(rng);
      archive.push_back(std::move(v));
    }
    for (int k : {1, 4, 7}) {
      BehaviorCharacteristic q(100);
      for (double& x : q) x = uniform01(rng);
      knn_err = std::max(knn_err, std::abs(novelty_score(q, archive, k) - oracle::knn_novelty(q, archive, k)));
    }
    ++archives;
  }
  std::vector<BehaviorCharacteristic> with_twin = {BehaviorCharacteristic(100, 0.25), BehaviorCharacteristic(100, 0.5)};
  const double twin = novelty_score(BehaviorCharacteristic(100, 0.5), with_twin, 1);
  return {bc_err <= 1e-12 && knn_err <= 1e-12 && twin == 0.0,
          "BC max error " + sci(bc_err) + " over 1000 paths; K-NN max error " + sci(knn_err) + " over " +
              std::to_string(archives) + " archives up to 500; identical-BC novelty " + sci(twin) + " at K=1"};
}

// 10 -----------------------------------------------------------------------
Outcome novelty_search(Context& ctx) {
  const ModelParams& gen = ctx.generator();
  const ModelParams& inf = ctx.infill();
  NsConfig cfg;
  cfg.init_size = 30;
  cfg.k = 4;
  cfg.level_columns = 100;
  cfg.iterations = 200;
  cfg.infill_window_columns = kInfillWindow;
  cfg.seed = 1010;
  SampleOptions so;
  so.temperature = 2.5;
  so.slide_columns = 10;
  ModelGenerator generator(gen, ctx.vocab(), so);
  ModelInfiller infiller(inf, ctx.vocab(), kInfillWindow);

  int locality_violations = 0, mutations = 0;
  const auto t0 = Clock::now();
  const NsRun run = ns_run(cfg, generator, infiller, [&](const LevelGrid& parent, const Mutation& m) {
    ++mutations;
    for (int c = 0; c < parent.width(); ++c) {
      if (c >= m.record.changed_begin && c < m.record.changed_end) continue;
      if (parent.column(c) != m.child.column(c)) {
        ++locality_violations;
        return;
      }
    }
  });
  const double t = seconds_since(t0);

  int growth_violations = 0, accepted = 0;
  std::size_t size = static_cast<std::size_t>(cfg.init_size);
  for (const auto& ev : run.log) {
    if (!ev.accepted) continue;
    ++accepted;
    if (!ev.child_id || static_cast<std::size_t>(*ev.child_id) != size) ++growth_violations;
    ++size;
  }
  if (size != run.elites.size()) ++growth_violations;
  bool coverage_monotone = true;
  std::string curve = "archive_size,coverage\n";
  for (std::size_t i = 0; i < run.coverage_curve.size(); ++i) {
    const auto& p = run.coverage_curve[i];
    curve += std::to_string(p.archive_size) + "," + num(p.coverage, 6) + "\n";
    if (i > 0 && p.coverage < run.coverage_curve[i - 1].coverage) coverage_monotone = false;
    if (i > 0 && p.archive_size != run.coverage_curve[i - 1].archive_size + 1) ++growth_violations;
  }
  write_text_file(ctx.out() / "ns_coverage.csv", curve);
  save_archive(ctx.out() / "ns_archive", run, {{"ns", to_json(cfg)}, {"temperature", so.temperature}});
  ctx.record("ns_elites " + std::to_string(run.elites.size()));
  ctx.record("ns_final_coverage " + num(run.coverage_curve.back().coverage));
  ctx.record("ns_seconds " + num(t, 1));

  return {t < 1200.0 && growth_violations == 0 && locality_violations == 0 && coverage_monotone &&
              mutations == cfg.iterations,
          std::to_string(mutations) + " iterations in " + num(t, 0) + " s (limit 1200 s), " + std::to_string(accepted) +
              " accepted, archive " + std::to_string(run.elites.size()) + ", coverage " +
              num(run.coverage_curve.front().coverage, 3) + " -> " + num(run.coverage_curve.back().coverage, 3) +
              (coverage_monotone ? " (nondecreasing)" : " (DECREASED)") + ", locality violations " +
              std::to_string(locality_violations) + ", growth violations " + std::to_string(growth_violations)};
}

// 11 -----------------------------------------------------------------------
Outcome infill_contract(Context& ctx) {
  ModelConfig tiny;
  tiny.kind = ModelKind::Infill;
  tiny.embed_dim = 8;
  tiny.num_layers = 1;
  tiny.num_heads = 1;
  tiny.context_len = kLevelHeight * 4;
  tiny.seed = 11;
  const ModelParams random_model = init_model(tiny);
  Rng rng(1111);
  int changed = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = static_cast<int>(uniform_int(rng, 1, tiny.context_len));
    TokenSequence t;
    for (int i = 0; i < n; ++i) t.push_back(static_cast<TokenId>(uniform_int(rng, 0, 13)));
    const int b = static_cast<int>(uniform_int(rng, 0, n));
    const int e = static_cast<int>(uniform_int(rng, b, std::min(n, b + 8)));
    const TokenSequence out = masked_infill(random_model, t, {b, e});
    for (int i = 0; i < n; ++i) {
      if ((i < b || i >= e) && out[i] != t[i]) {
        ++changed;
        break;
      }
    }
  }

  const ModelParams& inf = ctx.infill();
  const LevelGrid& train = ctx.split().train;
  Rng seam_rng(1112);
  int contiguous = 0, contiguous_before = 0;
  std::string examples;
  for (int trial = 0; trial < 100; ++trial) {
    const int a = static_cast<int>(uniform_int(seam_rng, 0, train.width() - 12));
    const int b = static_cast<int>(uniform_int(seam_rng, 0, train.width() - 12));
    const std::array<LevelGrid, 2> parts = {slice(train, a, 12), slice(train, b, 12)};
    const LevelGrid stitched = stitch(parts);
    const LevelGrid filled = infill_columns(inf, ctx.vocab(), stitched, 10, 14, kInfillWindow);
    contiguous_before += path_contiguous(stitched, 9, 15);
    const bool ok = path_contiguous(filled, 9, 15);
    contiguous += ok;
    if (trial < 5) examples += "trial " + std::to_string(trial) + (ok ? " contiguous\n" : " broken\n") +
                               render_ascii(slice(filled, 6, 12)) + "\n";
  }
  write_text_file(ctx.out() / "infill_examples.txt", examples);
  ctx.record("infill_seam_contiguous " + std::to_string(contiguous) + "/100");
  ctx.record("stitched_seam_contiguous_before_infill " + std::to_string(contiguous_before) + "/100");
  return {changed == 0 && contiguous >= 90,
          "unmasked positions changed in " + std::to_string(changed) + "/10000 trials; seam paths contiguous in " +
              std::to_string(contiguous) + "/100 infills (threshold 90; " + std::to_string(contiguous_before) +
              "/100 before infill)"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "format roundtrips", format_roundtrips},
      {2, "tokenizer roundtrips", tokenizer_roundtrips},
      {3, "prompt quantization anchors", prompt_anchors},
      {4, "gradient check", gradient_check},
      {5, "analytic loss and Adam", analytic_loss},
      {6, "trainability", trainability},
      {7, "temperature diversity and closest-sample oracle", temperature_diversity},
      {8, "playability simulator", playability},
      {9, "BC and novelty oracles", novelty_oracles},
      {10, "novelty search end to end", novelty_search},
      {11, "infill contract", infill_contract},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  Context ctx;
  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + "  [" + std::to_string(c.id) + "] " + c.name +
                             ": " + o.detail + " (" + num(seconds_since(t0), 1) + " s)";
    std::cout << line << std::endl;
    ctx.record(line);
  }
  ctx.write_summary();
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
