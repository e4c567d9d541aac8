#include "mario/generation.hpp"

#include <cmath>
#include <limits>

#include "mario/error.hpp"

namespace mario {

namespace {

constexpr int kNumTiles = static_cast<int>(kTileSymbols.size());

void check_char_vocab(const Vocab& vocab) {
  if (vocab.mode() != VocabMode::Char) throw Error(ErrorCode::BadConfig, "generation requires a char vocabulary");
}

LevelGrid decode_columns(std::span<const TokenId> tokens, const Vocab& vocab) {
  return unflatten(decode(tokens, vocab));
}

}  // namespace

LevelGrid canonical_seed_column() { return unflatten("------------xX"); }

ContextVector prompt_context(const ModelParams& params, const PromptSpec& prompt) {
  return encode_prompt(params, tokenize_prompt(compose_prompt(prompt)));
}

TokenId sample_tile_token(const RowVector& logits, const SampleOptions& options, Rng& rng) {
  if (logits.size() < kNumTiles) throw Error(ErrorCode::ShapeMismatch, "logits narrower than the tile alphabet");
  const auto tiles = logits.head(kNumTiles);
  Eigen::Index best;
  const double max_logit = tiles.maxCoeff(&best);
  if (options.greedy) return static_cast<TokenId>(best);
  if (!(options.temperature > 0.0) || !std::isfinite(options.temperature)) {
    throw Error(ErrorCode::InvalidTemperature, "temperature must be positive");
  }
  std::array<double, kNumTiles> weights;
  double total = 0.0;
  for (int i = 0; i < kNumTiles; ++i) {
    weights[i] = std::exp((tiles(i) - max_logit) / options.temperature);
    total += weights[i];
  }
  double u = uniform01(rng) * total;
  for (int i = 0; i < kNumTiles; ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return static_cast<TokenId>(best);
}

TokenSequence sample_tokens(const ModelParams& params, std::span<const TokenId> seed_tokens, const ContextVector& ctx,
                            int new_tokens, const SampleOptions& options, Rng& rng) {
  if (!options.greedy && (!(options.temperature > 0.0) || !std::isfinite(options.temperature))) {
    throw Error(ErrorCode::InvalidTemperature, "temperature must be positive");
  }
  if (seed_tokens.empty() || seed_tokens.size() % kLevelHeight != 0) {
    throw Error(ErrorCode::NonColumnSeed, "seed of " + std::to_string(seed_tokens.size()) +
                                              " tokens is not a whole number of columns");
  }
  const int context = params.config.context_len;
  const int slide = std::max(1, options.slide_columns) * kLevelHeight;
  if (slide >= context) throw Error(ErrorCode::BadConfig, "slide wider than the context window");

  // Keep only whole trailing columns that fit in the window.
  const int keep = std::min<int>(static_cast<int>(seed_tokens.size()), context / kLevelHeight * kLevelHeight);
  TokenSequence window(seed_tokens.end() - keep, seed_tokens.end());

  const FastModelParams fast = cast_params<float>(params);
  const BasicRowVector<float> fast_ctx = ctx.cast<float>();
  FastDecoderSession session(fast, fast_ctx);
  RowVector logits = session.prefill(window).cast<double>();
  TokenSequence out;
  out.reserve(static_cast<std::size_t>(std::max(new_tokens, 0)));
  while (static_cast<int>(out.size()) < new_tokens) {
    const TokenId t = sample_tile_token(logits, options, rng);
    out.push_back(t);
    if (static_cast<int>(out.size()) == new_tokens) break;
    if (static_cast<int>(window.size()) < context) {
      window.push_back(t);
      logits = session.append(t).cast<double>();
    } else {
      window.erase(window.begin(), window.begin() + slide);
      window.push_back(t);
      logits = session.prefill(window).cast<double>();
    }
  }
  return out;
}

LevelGrid generate_columns(const ModelParams& params, const Vocab& vocab, const LevelGrid& context,
                           const PromptSpec& prompt, int columns, const SampleOptions& options, Rng& rng) {
  check_char_vocab(vocab);
  if (columns < 1) throw Error(ErrorCode::BadConfig, "column count must be positive");
  const int window_cols = std::min(context.width(), params.config.context_len / kLevelHeight);
  const LevelGrid tail = slice(context, context.width() - window_cols, window_cols);
  const TokenSequence seed = encode(flatten(tail), vocab);
  const TokenSequence tokens =
      sample_tokens(params, seed, prompt_context(params, prompt), columns * kLevelHeight, options, rng);
  return decode_columns(tokens, vocab);
}

LevelGrid sample_level(const ModelParams& params, const Vocab& vocab, const LevelGrid& seed, const PromptSpec& prompt,
                       int target_columns, const SampleOptions& options, Rng& rng) {
  if (target_columns < 1) throw Error(ErrorCode::BadConfig, "target_columns must be positive");
  if (seed.width() >= target_columns) return slice(seed, 0, target_columns);
  const LevelGrid extra = generate_columns(params, vocab, seed, prompt, target_columns - seed.width(), options, rng);
  const std::array<LevelGrid, 2> parts = {seed, extra};
  return stitch(parts);
}

TokenSequence masked_infill(const ModelParams& params, std::span<const TokenId> tokens, TokenSpan span) {
  if (span.begin < 0 || span.end < span.begin || span.end > static_cast<int>(tokens.size())) {
    throw Error(ErrorCode::SpanOutOfBounds, "span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
                                                ") outside a sequence of " + std::to_string(tokens.size()));
  }
  TokenSequence seq(tokens.begin(), tokens.end());
  if (span.begin == span.end) return seq;
  if (params.config.kind != ModelKind::Infill) throw Error(ErrorCode::BadConfig, "masked_infill needs an infill model");
  std::vector<bool> masked(seq.size(), false);
  for (int i = span.begin; i < span.end; ++i) {
    seq[i] = Vocab::kMask;
    masked[i] = true;
  }
  const FastModelParams fast = cast_params<float>(params);
  for (int remaining = span.end - span.begin; remaining > 0; --remaining) {
    const BasicMatrix<float> probs = softmax_rows(forward(fast, seq));
    int best_pos = -1;
    TokenId best_tok = 0;
    double best_p = -1.0;
    for (int i = span.begin; i < span.end; ++i) {
      if (!masked[i]) continue;
      Eigen::Index tok;
      const double p = probs.row(i).head(kNumTiles).maxCoeff(&tok);
      if (p > best_p) {
        best_p = p;
        best_pos = i;
        best_tok = static_cast<TokenId>(tok);
      }
    }
    seq[best_pos] = best_tok;
    masked[best_pos] = false;
  }
  return seq;
}

LevelGrid infill_columns(const ModelParams& params, const Vocab& vocab, const LevelGrid& level, int begin, int end,
                         int window_columns) {
  check_char_vocab(vocab);
  if (begin < 0 || end < begin || end > level.width()) throw Error(ErrorCode::SpanOutOfBounds, "column span outside level");
  if (begin == end) return level;
  const int max_window = std::min(window_columns, params.config.context_len / kLevelHeight);
  const int span = end - begin;
  if (span > max_window) throw Error(ErrorCode::SpanOutOfBounds, "span wider than the infill window");
  const int width = std::min(max_window, level.width());
  int start = begin - (width - span) / 2;
  start = std::clamp(start, 0, level.width() - width);

  const TokenSequence tokens = encode(flatten(slice(level, start, width)), vocab);
  const TokenSequence filled =
      masked_infill(params, tokens, {(begin - start) * kLevelHeight, (end - start) * kLevelHeight});
  const LevelGrid patch = decode_columns(filled, vocab);
  LevelGrid out = level;
  for (int c = begin; c < end; ++c) {
    for (int r = 0; r < kLevelHeight; ++r) out.set(r, c, patch.at(r, c - start));
  }
  return out;
}

}  // namespace mario
