#include "mario/training.hpp"

#include <cmath>
#include <sstream>

#include "mario/error.hpp"
#include "mario/evaluation.hpp"

namespace mario {

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::BadConfig, why); };
  if (steps < 0) fail("steps must be >= 0");
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(adam.lr > 0.0)) fail("learning rate must be positive");
  if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0) fail("betas must be in [0, 1)");
  if (!(adam.eps > 0.0)) fail("eps must be positive");
  if (clip_norm < 0.0) fail("clip_norm must be >= 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail("val_fraction must be in (0, 1)");
  if (eval_every < 0 || eval_stride < 1) fail("eval_every must be >= 0 and eval_stride >= 1");
  if (infill_window_columns < 2) fail("infill_window_columns must be >= 2");
  if (infill_max_span_columns < 1 || infill_max_span_columns >= infill_window_columns) {
    fail("infill_max_span_columns must be in [1, infill_window_columns)");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"clip_norm", c.clip_norm},
          {"val_fraction", c.val_fraction},
          {"eval_every", c.eval_every},
          {"eval_stride", c.eval_stride},
          {"stop_tile_acc", c.stop_tile_acc},
          {"infill_window_columns", c.infill_window_columns},
          {"infill_max_span_columns", c.infill_max_span_columns},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.steps = j.at("steps").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.adam.lr = j.at("lr").get<double>();
    c.adam.beta1 = j.at("beta1").get<double>();
    c.adam.beta2 = j.at("beta2").get<double>();
    c.adam.eps = j.at("eps").get<double>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.val_fraction = j.at("val_fraction").get<double>();
    c.eval_every = j.at("eval_every").get<int>();
    c.eval_stride = j.at("eval_stride").get<int>();
    c.stop_tile_acc = j.at("stop_tile_acc").get<double>();
    c.infill_window_columns = j.at("infill_window_columns").get<int>();
    c.infill_max_span_columns = j.at("infill_max_span_columns").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("training config: ") + e.what());
  }
  return c;
}

CorpusSplit split_corpus(const LevelGrid& stitched, double val_fraction, int window_columns) {
  const int width = stitched.width();
  const int val_width = static_cast<int>(std::floor(width * val_fraction));
  const int train_width = width - val_width;
  if (val_width < window_columns) {
    throw Error(ErrorCode::EmptyValidation, "validation split of " + std::to_string(val_width) +
                                                " columns is narrower than one window");
  }
  if (train_width < window_columns + 1) throw Error(ErrorCode::EmptyValidation, "training split is too narrow");
  return {slice(stitched, 0, train_width), slice(stitched, train_width, val_width)};
}

TokenSequence encode_level(const LevelGrid& level, const Vocab& vocab) {
  if (vocab.mode() != VocabMode::Char) throw Error(ErrorCode::BadConfig, "models require a char vocabulary");
  return encode(flatten(level), vocab);
}

TrainingExample generator_example(const LevelGrid& region, int start_col, const Vocab& vocab,
                                  const QuantileConfig& quantiles, int window_columns) {
  const LevelGrid window = slice(region, start_col, window_columns);
  TrainingExample ex;
  ex.tokens = encode_level(window, vocab);
  ex.targets.assign(ex.tokens.begin() + 1, ex.tokens.end());
  if (start_col + window_columns < region.width()) {
    ex.targets.push_back(vocab.find(std::string(1, region.at(0, start_col + window_columns))));
  } else {
    ex.targets.push_back(-1);
  }
  ex.prompt_tokens = tokenize_prompt(compose_prompt(quantize(count_features(window, true), quantiles)));
  return ex;
}

TrainingExample infill_example(const LevelGrid& window, int mask_begin, int mask_width, const Vocab& vocab,
                               const std::vector<int>& revealed) {
  if (mask_begin < 0 || mask_width < 1 || mask_begin + mask_width > window.width()) {
    throw Error(ErrorCode::SpanOutOfBounds, "mask columns outside the window");
  }
  TrainingExample ex;
  ex.tokens = encode_level(window, vocab);
  ex.targets.assign(ex.tokens.size(), -1);
  const int begin = mask_begin * kLevelHeight, end = (mask_begin + mask_width) * kLevelHeight;
  for (int i = begin; i < end; ++i) {
    ex.targets[i] = ex.tokens[i];
    ex.tokens[i] = Vocab::kMask;
  }
  for (int i : revealed) {
    if (i >= begin && i < end) {
      ex.tokens[i] = ex.targets[i];
      ex.targets[i] = -1;
    }
  }
  return ex;
}

namespace {

TrainingExample random_infill_example(const LevelGrid& region, const Vocab& vocab, const TrainConfig& config,
                                      Rng& rng, bool partial_reveal) {
  const int w = config.infill_window_columns;
  const int start = static_cast<int>(uniform_int(rng, 0, region.width() - w));
  const int span = static_cast<int>(uniform_int(rng, 1, config.infill_max_span_columns));
  const int begin = static_cast<int>(uniform_int(rng, 0, w - span));
  // Iterative decoding sees partially filled spans, so training reveals a
  // random subset of the masked tokens. At least one stays hidden.
  std::vector<int> revealed;
  if (partial_reveal) {
    const double keep = uniform01(rng);
    const int hidden = static_cast<int>(uniform_int(rng, begin * kLevelHeight, (begin + span) * kLevelHeight - 1));
    for (int i = begin * kLevelHeight; i < (begin + span) * kLevelHeight; ++i) {
      if (i != hidden && uniform01(rng) < keep) revealed.push_back(i);
    }
  }
  return infill_example(slice(region, start, w), begin, span, vocab, revealed);
}

void clip_gradients(ModelParams& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const Matrix* g : tensors(static_cast<const ModelParams&>(grads))) sq += g->squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    for (auto& t : tensors(grads)) *t.tensor *= max_norm / norm;
  }
}

}  // namespace

TrainState start_training(const ModelConfig& model, const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.params = init_model(model);
  s.opt = init_opt_state(s.params, config.adam);
  s.rng = Rng(derive_seed(config.seed, 1));
  return s;
}

std::vector<TrainingExample> validation_set(ModelKind kind, const LevelGrid& val, const Vocab& vocab,
                                            const QuantileConfig& quantiles, const TrainConfig& config) {
  std::vector<TrainingExample> out;
  if (kind == ModelKind::Generator) {
    for (int start = 0; start + kWindowColumns <= val.width(); start += config.eval_stride) {
      out.push_back(generator_example(val, start, vocab, quantiles));
    }
  } else {
    Rng rng(derive_seed(config.seed, 2));
    const int w = config.infill_window_columns;
    for (int start = 0; start + w <= val.width(); start += config.eval_stride) {
      const int span = static_cast<int>(uniform_int(rng, 1, config.infill_max_span_columns));
      const int begin = static_cast<int>(uniform_int(rng, 0, w - span));
      out.push_back(infill_example(slice(val, start, w), begin, span, vocab));
    }
  }
  if (out.empty()) throw Error(ErrorCode::EmptyValidation, "validation region yields no windows");
  return out;
}

void train(TrainState& state, const CorpusSplit& split, const Vocab& vocab, const QuantileConfig& quantiles,
           const TrainConfig& config, const StepCallback& on_step) {
  config.validate();
  const ModelKind kind = state.params.config.kind;
  const int window = kind == ModelKind::Generator ? kWindowColumns : config.infill_window_columns;
  if (window * kLevelHeight > state.params.config.context_len) {
    throw Error(ErrorCode::BadConfig, "training window exceeds the model context");
  }
  const LevelGrid& region = split.train;
  if (region.width() < window + 1) throw Error(ErrorCode::BadConfig, "training region narrower than one window");

  // Generator examples only depend on the start column; build them lazily.
  const TokenSequence region_tokens = encode_level(region, vocab);
  std::vector<std::vector<int>> prompts;
  if (kind == ModelKind::Generator) {
    for (const auto& a : annotate_windows(region, 1, quantiles)) prompts.push_back(tokenize_prompt(compose_prompt(a.prompt)));
  }

  std::vector<TrainingExample> val;
  double baseline = 0.0;
  if (config.eval_every > 0) {
    val = validation_set(kind, split.val, vocab, quantiles, config);
    baseline = unigram_baseline(region, val, vocab);
  }

  const int span_tokens = window * kLevelHeight;
  while (state.step < config.steps && !state.stopped_early) {
    std::vector<TrainingExample> batch;
    for (int b = 0; b < config.batch_size; ++b) {
      if (kind == ModelKind::Generator) {
        const int start = static_cast<int>(uniform_int(state.rng, 0, region.width() - window - 1));
        TrainingExample ex;
        const auto first = region_tokens.begin() + start * kLevelHeight;
        ex.tokens.assign(first, first + span_tokens);
        ex.targets.assign(first + 1, first + span_tokens + 1);
        ex.prompt_tokens = prompts[start];
        batch.push_back(std::move(ex));
      } else {
        batch.push_back(random_infill_example(region, vocab, config, state.rng, true));
      }
    }
    // Forward and backward run in single precision; Adam updates the double master copy.
    const auto lg = loss_and_grad(cast_params<float>(state.params), batch);
    ModelParams grads = cast_params<double>(lg.grads);
    clip_gradients(grads, config.clip_norm);
    adam_step(state.params, grads, state.opt);
    ++state.step;
    state.metrics.push_back({state.step, lg.loss, state.opt.hp.lr});

    if (config.eval_every > 0 && (state.step % config.eval_every == 0 || state.step == config.steps)) {
      const EvalResult r = evaluate(state.params, val);
      state.evals.push_back({state.step, r.tile_acc, r.path_acc});
      if (config.stop_tile_acc > 0.0 && r.tile_acc > config.stop_tile_acc && r.tile_acc > baseline) {
        state.stopped_early = true;
      }
    }
    if (on_step) on_step(state);
  }
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "step,loss,lr\n";
  for (const auto& r : rows) out << r.step << ',' << r.loss << ',' << r.lr << '\n';
  return out.str();
}

std::string evals_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "step,tile_acc,path_acc\n";
  for (const auto& r : rows) out << r.step << ',' << r.tile_acc << ',' << r.path_acc << '\n';
  return out.str();
}

std::string serialize_rng(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

Rng deserialize_rng(const std::string& text) {
  std::istringstream in(text);
  Rng rng;
  in >> rng;
  if (!in) throw Error(ErrorCode::BadFormat, "bad RNG state");
  return rng;
}

}  // namespace mario
