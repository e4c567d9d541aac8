#pragma once

#include <filesystem>
#include <span>

#include "mario/corpus.hpp"
#include "mario/model.hpp"
#include "mario/prompt.hpp"
#include "mario/random.hpp"
#include "mario/tokenizer.hpp"

namespace mario {

struct SampleOptions {
  double temperature = 2.5;
  /// Argmax decoding; the temperature is ignored.
  bool greedy = false;
  /// Columns dropped from the front when the window is full.
  int slide_columns = 1;
};

/// Flat-ground column shipped with the repo.
LevelGrid canonical_seed_column();

ContextVector prompt_context(const ModelParams& params, const PromptSpec& prompt);

/// Sample one token id from `logits` restricted to the tile symbols.
TokenId sample_tile_token(const RowVector& logits, const SampleOptions& options, Rng& rng);

/// Autoregressively extend `seed_tokens` (whole columns) by `new_tokens`.
/// Returns only the generated tokens. Throws InvalidTemperature, NonColumnSeed.
TokenSequence sample_tokens(const ModelParams& params, std::span<const TokenId> seed_tokens, const ContextVector& ctx,
                            int new_tokens, const SampleOptions& options, Rng& rng);

/// `columns` new columns conditioned on the trailing window of `context`.
LevelGrid generate_columns(const ModelParams& params, const Vocab& vocab, const LevelGrid& context,
                           const PromptSpec& prompt, int columns, const SampleOptions& options, Rng& rng);

/// Seed followed by generated columns, truncated to `target_columns`.
LevelGrid sample_level(const ModelParams& params, const Vocab& vocab, const LevelGrid& seed, const PromptSpec& prompt,
                       int target_columns, const SampleOptions& options, Rng& rng);

struct TokenSpan {
  int begin = 0;
  int end = 0;  // exclusive
};

/// Mask `span`, then fill one position per forward pass, always the masked
/// position whose best tile is most probable (ties go to the lowest index).
/// Positions outside the span are returned unchanged. Throws SpanOutOfBounds.
TokenSequence masked_infill(const ModelParams& params, std::span<const TokenId> tokens, TokenSpan span);

/// Re-infill columns [begin, end) of `level` using a window of at most
/// `window_columns` columns centred on the span.
LevelGrid infill_columns(const ModelParams& params, const Vocab& vocab, const LevelGrid& level, int begin, int end,
                         int window_columns);

}  // namespace mario
