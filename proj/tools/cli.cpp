#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "mario/checkpoint.hpp"
#include "mario/corpus.hpp"
#include "mario/error.hpp"
#include "mario/evaluation.hpp"
#include "mario/generation.hpp"
#include "mario/novelty.hpp"
#include "mario/playability.hpp"
#include "mario/prompt.hpp"
#include "mario/training.hpp"

namespace mario::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Io, "SHA-256 computation failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

namespace {

struct ModelFlags {
  int embed = 64;
  int layers = 2;
  int heads = 4;
  int generator_columns = kWindowColumns;
  int infill_columns = 24;
};

struct Options {
  std::uint64_t seed = 0;
  std::string out_root = "runs";
  std::string out;

  std::string manifest = "data/corpus/manifest.txt";
  std::string quantiles;

  // prepare / annotate
  int stride = 1;
  std::string level;

  // train
  std::string kind = "both";
  int steps = 5000;
  int batch = 4;
  double lr = 1e-3;
  double clip = 1.0;
  double val_fraction = 0.1;
  int eval_every = 250;
  int eval_stride = 10;
  double stop_acc = 0.0;
  int infill_max_span = 6;
  std::string resume;
  ModelFlags model;

  // sample / eval / ns
  std::string checkpoint;
  std::string prompt = "some pipes, some enemies, some blocks";
  double temperature = 2.5;
  bool greedy = false;
  int slide = 1;
  int columns = 100;
  int count = 1;
  bool render = false;

  // play
  std::vector<std::string> levels;
  int runs = 5;
  std::size_t budget = kDefaultNodeBudget;
  int jump = 4;
  int gap = 4;

  // ns
  std::string generator;
  std::string infill;
  int iters = 200;
  int init = 30;
  int k = 4;
  double parent_fraction = 0.25;
  int seam = 4;
  std::string accept = "min";
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool is_config_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadConfig:
    case ErrorCode::EmptySpec:
    case ErrorCode::BadClause:
    case ErrorCode::UnknownFeature:
    case ErrorCode::DuplicateFeature:
    case ErrorCode::InvalidTemperature:
      return true;
    default:
      return false;
  }
}

std::string absolute(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

QuantileConfig quantiles_of(const Options& o) {
  return o.quantiles.empty() ? QuantileConfig{} : load_quantile_config(o.quantiles);
}

PhysicsRules physics_of(const Options& o) {
  PhysicsRules r;
  r.max_jump_height = o.jump;
  r.max_gap = o.gap;
  r.validate();
  return r;
}

TrainConfig train_config_of(const Options& o) {
  TrainConfig t;
  t.steps = o.steps;
  t.batch_size = o.batch;
  t.adam.lr = o.lr;
  t.clip_norm = o.clip;
  t.val_fraction = o.val_fraction;
  t.eval_every = o.eval_every;
  t.eval_stride = o.eval_stride;
  t.stop_tile_acc = o.stop_acc;
  t.infill_window_columns = o.model.infill_columns;
  t.infill_max_span_columns = o.infill_max_span;
  t.seed = o.seed;
  t.validate();
  return t;
}

ModelConfig model_config_of(const Options& o, ModelKind kind) {
  ModelConfig m;
  m.kind = kind;
  m.embed_dim = o.model.embed;
  m.num_layers = o.model.layers;
  m.num_heads = o.model.heads;
  m.context_len = kLevelHeight * (kind == ModelKind::Generator ? o.model.generator_columns : o.model.infill_columns);
  m.seed = derive_seed(o.seed, kind == ModelKind::Generator ? 11 : 12);
  m.validate();
  return m;
}

SampleOptions sample_options_of(const Options& o) {
  if (!(o.temperature > 0.0)) throw ConfigError("temperature must be > 0");
  SampleOptions s;
  s.temperature = o.temperature;
  s.greedy = o.greedy;
  s.slide_columns = o.slide;
  return s;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_snapshot(const fs::path& dir, const std::string& command, const json& resolved) {
  fs::create_directories(dir);
  json snap = resolved;
  snap["command"] = command;
  write_text_file(dir / "config.json", snap.dump(2) + "\n");
}

json match_json(const PromptMatch& m) {
  auto field = [](const std::optional<bool>& b) { return b ? json(*b) : json(nullptr); };
  return {{"pipes", field(m.pipes)},
          {"enemies", field(m.enemies)},
          {"blocks", field(m.blocks)},
          {"elevation", field(m.elevation)},
          {"all", m.all()}};
}

// prepare: stitch the manifest, annotate it, log content hashes.
int cmd_prepare(const Options& o, const fs::path& dir, std::ostream& out) {
  const Corpus corpus = load_corpus(o.manifest);
  std::ostringstream hashes;
  auto log_hash = [&](const fs::path& p, const std::string& bytes) {
    hashes << sha256_hex(bytes) << "  " << p.filename().string() << "\n";
  };
  log_hash(o.manifest, read_text_file(o.manifest));
  for (const auto& f : corpus.files) log_hash(f, read_text_file(f));

  const std::string stitched = render_ascii(corpus.stitched);
  write_text_file(dir / "stitched.txt", stitched);
  log_hash(dir / "stitched.txt", stitched);

  std::string annotations = "start_col,prompt\n";
  for (const auto& a : annotate_windows(corpus.stitched, o.stride, quantiles_of(o))) {
    annotations += std::to_string(a.start_col) + ",\"" + compose_prompt(a.prompt) + "\"\n";
  }
  write_text_file(dir / "annotations.csv", annotations);
  log_hash(dir / "annotations.csv", annotations);
  write_text_file(dir / "hashes.txt", hashes.str());

  out << "levels " << corpus.levels.size() << ", columns " << corpus.stitched.width() << "\n" << hashes.str();
  return kOk;
}

int cmd_annotate(const Options& o, const fs::path& dir, std::ostream& out) {
  const LevelGrid level = o.level.empty() ? load_corpus(o.manifest).stitched : load_level_file(o.level);
  std::string csv = "start_col,prompt\n";
  const auto rows = annotate_windows(level, o.stride, quantiles_of(o));
  for (const auto& a : rows) csv += std::to_string(a.start_col) + ",\"" + compose_prompt(a.prompt) + "\"\n";
  write_text_file(dir / "annotations.csv", csv);
  out << rows.size() << " windows annotated\n";
  return kOk;
}

Checkpoint make_checkpoint(const TrainState& s, const Vocab& vocab, const TrainConfig& tc) {
  Checkpoint ck{s.params, vocab, s.step, s.opt, json::object()};
  ck.metadata["train"] = to_json(tc);
  ck.metadata["rng"] = serialize_rng(s.rng);
  return ck;
}

void train_one(TrainState& state, const TrainConfig& tc, const CorpusSplit& split, const Vocab& vocab,
               const QuantileConfig& q, const fs::path& dir, std::ostream& out) {
  const std::string name = to_string(state.params.config.kind);
  const std::int64_t every = std::max(1, tc.steps / 20);
  train(state, split, vocab, q, tc, [&](const TrainState& s) {
    if (s.step % every == 0 || s.step == tc.steps) {
      out << name << " step " << s.step << " loss " << format_double(s.metrics.back().loss);
      if (!s.evals.empty() && s.evals.back().step == s.step) {
        out << " val_tile_acc " << format_double(s.evals.back().tile_acc) << " val_path_acc "
            << format_double(s.evals.back().path_acc);
      }
      out << "\n";
    }
  });
  save_checkpoint(dir / (name + ".ckpt"), make_checkpoint(state, vocab, tc));
  write_text_file(dir / (name + "_metrics.csv"), metrics_csv(state.metrics));
  write_text_file(dir / (name + "_evals.csv"), evals_csv(state.evals));
  out << name << " finished at step " << state.step << (state.stopped_early ? " (early stop)" : "") << "\n";
}

int cmd_train(const Options& o, const fs::path& dir, std::ostream& out) {
  const TrainConfig tc = train_config_of(o);
  const QuantileConfig q = quantiles_of(o);
  const Vocab vocab = build_char_vocab();
  const CorpusSplit split = split_corpus(load_corpus(o.manifest).stitched, tc.val_fraction);

  if (!o.resume.empty()) {
    Checkpoint ck = load_checkpoint(o.resume);
    if (!ck.opt) throw Error(ErrorCode::BadFormat, "checkpoint has no optimizer state to resume from");
    TrainState state;
    state.params = std::move(ck.params);
    state.opt = std::move(*ck.opt);
    state.step = ck.step;
    state.rng = ck.metadata.contains("rng") ? deserialize_rng(ck.metadata["rng"].get<std::string>())
                                            : Rng(derive_seed(tc.seed, 1));
    train_one(state, tc, split, vocab, q, dir, out);
    return kOk;
  }
  std::vector<ModelKind> kinds;
  if (o.kind == "generator" || o.kind == "both") kinds.push_back(ModelKind::Generator);
  if (o.kind == "infill" || o.kind == "both") kinds.push_back(ModelKind::Infill);
  for (ModelKind kind : kinds) {
    TrainState state = start_training(model_config_of(o, kind), tc);
    train_one(state, tc, split, vocab, q, dir, out);
  }
  return kOk;
}

int cmd_sample(const Options& o, const fs::path& dir, std::ostream& out) {
  const PromptSpec prompt = parse_prompt(o.prompt);
  const SampleOptions so = sample_options_of(o);
  if (o.count < 0) throw ConfigError("count must be >= 0");
  if (o.count == 0) return kOk;
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  if (ck.params.config.kind != ModelKind::Generator) throw ConfigError("sampling needs a generator checkpoint");
  const QuantileConfig q = quantiles_of(o);
  Rng rng(derive_seed(o.seed, 21));
  char name[32];
  for (int i = 0; i < o.count; ++i) {
    const LevelGrid level = sample_level(ck.params, ck.vocab, canonical_seed_column(), prompt, o.columns, so, rng);
    std::snprintf(name, sizeof(name), "sample_%03d", i);
    save_level_file(dir / (std::string(name) + ".txt"), level);
    const PromptMatch m = prompt_match(level, prompt, q);
    const json meta = {{"prompt", compose_prompt(prompt)},
                       {"temperature", o.temperature},
                       {"columns", level.width()},
                       {"match", match_json(m)}};
    write_text_file(dir / (std::string(name) + ".json"), meta.dump(2) + "\n");
    out << name << ".txt prompt_match " << (m.all() ? "yes" : "no") << "\n";
    if (o.render) out << render_ascii(level) << "\n";
  }
  return kOk;
}

int cmd_eval(const Options& o, const fs::path& dir, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  TrainConfig tc = ck.metadata.contains("train") ? train_config_from_json(ck.metadata["train"]) : TrainConfig{};
  tc.val_fraction = o.val_fraction;
  tc.eval_stride = o.eval_stride;
  const CorpusSplit split = split_corpus(load_corpus(o.manifest).stitched, tc.val_fraction);
  const auto examples = validation_set(ck.params.config.kind, split.val, ck.vocab, quantiles_of(o), tc);
  const EvalResult r = evaluate(ck.params, examples);
  const double baseline = unigram_baseline(split.train, examples, ck.vocab);
  const std::string csv = "tile_acc,path_acc,unigram_baseline,positions,path_positions\n" +
                          format_double(r.tile_acc) + "," + format_double(r.path_acc) + "," +
                          format_double(baseline) + "," + std::to_string(r.positions) + "," +
                          std::to_string(r.path_positions) + "\n";
  write_text_file(dir / "eval.csv", csv);
  out << csv;
  return kOk;
}

int cmd_play(const Options& o, const fs::path& dir, std::ostream& out) {
  const PhysicsRules rules = physics_of(o);
  if (o.runs < 1) throw ConfigError("runs must be >= 1");
  std::vector<LevelGrid> levels;
  std::vector<std::string> ids;
  for (const auto& f : o.levels) {
    levels.push_back(load_level_file(f));
    ids.push_back(fs::path(f).filename().string());
  }
  const PlayabilityReport report = playability_report(levels, ids, rules, o.runs, o.budget);
  write_text_file(dir / "play_report.csv", report_csv(report));
  write_text_file(dir / "play_summary.csv", summary_csv(report));
  if (o.render) {
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const auto& row = report.levels[i];
      out << row.id << (row.playable ? " playable" : " not playable") << "\n"
          << render_overlay(levels[i], extract_predicted_path(levels[i]), row.result.best_effort_path) << "\n";
    }
  }
  out << summary_csv(report);
  return kOk;
}

int cmd_ns(const Options& o, const fs::path& dir, std::ostream& out) {
  const SampleOptions so = sample_options_of(o);
  NsConfig cfg;
  cfg.init_size = o.init;
  cfg.level_columns = o.columns;
  cfg.k = o.k;
  cfg.iterations = o.iters;
  cfg.parent_fraction = o.parent_fraction;
  cfg.seam_columns = o.seam;
  cfg.accept = o.accept == "mean" ? AcceptRule::ExceedMean : AcceptRule::ExceedMinimum;
  cfg.seed = derive_seed(o.seed, 31);
  const Checkpoint gen = load_checkpoint(o.generator);
  const Checkpoint inf = load_checkpoint(o.infill);
  if (gen.params.config.kind != ModelKind::Generator) throw ConfigError("--generator is not a generator checkpoint");
  if (inf.params.config.kind != ModelKind::Infill) throw ConfigError("--infill is not an infill checkpoint");
  cfg.infill_window_columns = inf.params.config.context_len / kLevelHeight;
  cfg.validate();

  ModelGenerator generator(gen.params, gen.vocab, so);
  ModelInfiller infiller(inf.params, inf.vocab, cfg.infill_window_columns);
  std::size_t done = 0;
  const NsRun run = ns_run(cfg, generator, infiller, [&](const LevelGrid&, const Mutation&) {
    ++done;
    if (done % 20 == 0) out << "iteration " << done << "\n";
  });
  json extra = {{"ns", to_json(cfg)}, {"temperature", so.temperature}, {"slide_columns", so.slide_columns}};
  save_archive(dir, run, extra);
  out << "archive " << run.elites.size() << " elites, coverage " << format_double(run.coverage_curve.back().coverage)
      << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Prompt-conditioned tile level generation, playability checks and novelty search", "mario"};
  app.set_config("--config", "", "INI file of option values; command-line flags take precedence");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.add_option("--seed", o.seed, "Global RNG seed");
  app.add_option("--out-root", o.out_root, "Root for run directories when --out is not given")->envname("MARIO_OUT");
  app.add_option("--out", o.out, "Output directory for this run");

  auto add_manifest = [&](CLI::App* s) { s->add_option("--manifest", o.manifest, "Corpus manifest"); };
  auto add_quantiles = [&](CLI::App* s) { s->add_option("--quantiles", o.quantiles, "Quantile edge config file"); };
  auto add_sampling = [&](CLI::App* s) {
    s->add_option("--temperature", o.temperature, "Sampling temperature (> 0)");
    s->add_flag("--greedy", o.greedy, "Argmax decoding");
    s->add_option("--slide", o.slide, "Columns dropped when the context window is full");
    s->add_option("--columns", o.columns, "Level width in columns, seed column included");
  };

  CLI::App* prepare = app.add_subcommand("prepare", "Stitch the corpus, annotate windows, log content hashes");
  add_manifest(prepare);
  add_quantiles(prepare);
  prepare->add_option("--stride", o.stride, "Column stride between annotated windows")->check(CLI::PositiveNumber);

  CLI::App* annotate = app.add_subcommand("annotate", "Emit (window, prompt) pairs");
  add_manifest(annotate);
  add_quantiles(annotate);
  annotate->add_option("--level", o.level, "Annotate this level file instead of the corpus");
  annotate->add_option("--stride", o.stride, "Column stride between windows")->check(CLI::PositiveNumber);

  CLI::App* trainc = app.add_subcommand("train", "Train the generator and/or infill model");
  add_manifest(trainc);
  add_quantiles(trainc);
  trainc->add_option("--kind", o.kind, "generator, infill or both")
      ->check(CLI::IsMember({"generator", "infill", "both"}));
  trainc->add_option("--steps", o.steps, "Total optimizer steps");
  trainc->add_option("--batch", o.batch, "Windows per step");
  trainc->add_option("--lr", o.lr, "Adam learning rate");
  trainc->add_option("--clip", o.clip, "Gradient norm clip, 0 disables");
  trainc->add_option("--val-fraction", o.val_fraction, "Trailing fraction of columns held out");
  trainc->add_option("--eval-every", o.eval_every, "Validate every N steps, 0 disables");
  trainc->add_option("--eval-stride", o.eval_stride, "Column stride between validation windows");
  trainc->add_option("--stop-acc", o.stop_acc, "Stop once validation tile accuracy passes this and the baseline");
  trainc->add_option("--infill-max-span", o.infill_max_span, "Widest masked span in infill training");
  trainc->add_option("--embed", o.model.embed, "Embedding width");
  trainc->add_option("--layers", o.model.layers, "Transformer layers");
  trainc->add_option("--heads", o.model.heads, "Attention heads");
  trainc->add_option("--generator-columns", o.model.generator_columns, "Generator context in columns");
  trainc->add_option("--infill-columns", o.model.infill_columns, "Infill context in columns");
  trainc->add_option("--resume", o.resume, "Continue training from this checkpoint");

  CLI::App* sample = app.add_subcommand("sample", "Sample prompted levels from a generator checkpoint");
  add_quantiles(sample);
  add_sampling(sample);
  sample->add_option("--checkpoint", o.checkpoint, "Generator checkpoint")->required();
  sample->add_option("--prompt", o.prompt, "Prompt text");
  sample->add_option("--count", o.count, "Number of levels");
  sample->add_flag("--render", o.render, "Print each level");

  CLI::App* evalc = app.add_subcommand("eval", "Validation tile and path accuracy of a checkpoint");
  add_manifest(evalc);
  add_quantiles(evalc);
  evalc->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  evalc->add_option("--val-fraction", o.val_fraction, "Trailing fraction of columns held out");
  evalc->add_option("--eval-stride", o.eval_stride, "Column stride between validation windows");

  CLI::App* play = app.add_subcommand("play", "Run the A* agent over level files");
  play->add_option("--level", o.levels, "Level file (repeatable)")->required();
  play->add_option("--runs", o.runs, "Runs per level with growing node budgets");
  play->add_option("--budget", o.budget, "Node budget of the final run");
  play->add_option("--jump", o.jump, "Maximum jump height in tiles");
  play->add_option("--gap", o.gap, "Widest clearable gap in tiles");
  play->add_flag("--render", o.render, "Overlay agent (A) and predicted (P) paths, '*' where both");

  CLI::App* ns = app.add_subcommand("ns", "Novelty search with generator mutation and seam infill");
  add_sampling(ns);
  ns->add_option("--generator", o.generator, "Generator checkpoint")->required();
  ns->add_option("--infill", o.infill, "Infill checkpoint")->required();
  ns->add_option("--iters", o.iters, "Mutation iterations");
  ns->add_option("--init", o.init, "Initial archive size");
  ns->add_option("--k", o.k, "Novelty neighbourhood size");
  ns->add_option("--parent-fraction", o.parent_fraction, "Top fraction of elites eligible as parents");
  ns->add_option("--seam", o.seam, "Columns re-infilled around each junction");
  ns->add_option("--accept", o.accept, "Acceptance threshold: min or mean")->check(CLI::IsMember({"min", "mean"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  try {
    for (std::string* p : {&o.manifest, &o.quantiles, &o.level, &o.resume, &o.checkpoint, &o.generator, &o.infill}) {
      *p = absolute(*p);
    }
    for (auto& l : o.levels) l = absolute(l);
    const fs::path dir = absolute(o.out.empty() ? (fs::path(o.out_root) / command).string() : o.out);
    o.out = dir.string();

    json resolved = {{"seed", o.seed}, {"out", o.out}};
    for (const CLI::Option* opt : sub->get_options()) {
      const std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
      if (name == "help") continue;
      resolved[name] = opt->count() > 0 ? opt->as<std::string>() : opt->get_default_str();
    }
    // Paths as resolved above rather than as typed.
    for (auto [key, value] : {std::pair<const char*, const std::string*>{"manifest", &o.manifest},
                              {"quantiles", &o.quantiles},
                              {"level", &o.level},
                              {"resume", &o.resume},
                              {"checkpoint", &o.checkpoint},
                              {"generator", &o.generator},
                              {"infill", &o.infill}}) {
      if (resolved.contains(key)) resolved[key] = *value;
    }
    if (resolved.contains("level") && command == "play") resolved["level"] = o.levels;
    write_snapshot(dir, command, resolved);

    if (command == "prepare") return cmd_prepare(o, dir, out);
    if (command == "annotate") return cmd_annotate(o, dir, out);
    if (command == "train") return cmd_train(o, dir, out);
    if (command == "sample") return cmd_sample(o, dir, out);
    if (command == "eval") return cmd_eval(o, dir, out);
    if (command == "play") return cmd_play(o, dir, out);
    if (command == "ns") return cmd_ns(o, dir, out);
    err << "unknown command " << command << "\n";
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const Error& e) {
    err << (is_config_error(e.code()) ? "config error: " : "error: ") << e.what() << "\n";
    return is_config_error(e.code()) ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace mario::cli
