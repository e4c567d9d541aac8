#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mario {

using TokenId = int;
using TokenSequence = std::vector<TokenId>;

enum class VocabMode { Char, Bpe };

/// Token-id <-> string bijection plus ordered merge rules.
///
/// Ids 0..13 are the tile symbols in canonical order, 14..17 the specials
/// (pad, begin, end, mask), and merged symbols follow in the order they were
/// first created during training.
class Vocab {
 public:
  static constexpr TokenId kPad = 14;
  static constexpr TokenId kBegin = 15;
  static constexpr TokenId kEnd = 16;
  static constexpr TokenId kMask = 17;
  static constexpr int kNumBase = 18;

  VocabMode mode() const noexcept { return mode_; }
  int size() const noexcept { return static_cast<int>(symbols_.size()); }
  const std::string& symbol(TokenId id) const;
  bool is_special(TokenId id) const noexcept { return id >= kPad && id <= kMask; }
  bool contains(TokenId id) const noexcept { return id >= 0 && id < size(); }
  /// Id of a symbol string, or -1.
  TokenId find(std::string_view symbol) const;

  const std::vector<std::pair<std::string, std::string>>& merges() const noexcept { return merges_; }

  /// Versioned text serialization; identical vocabs serialize to identical bytes.
  std::string serialize() const;
  static Vocab deserialize(std::string_view text);

  bool operator==(const Vocab& other) const {
    return mode_ == other.mode_ && symbols_ == other.symbols_ && merges_ == other.merges_;
  }

 private:
  friend Vocab build_char_vocab();
  friend Vocab train_bpe(std::span<const std::string>, int);

  TokenId add_symbol(const std::string& s);
  void rebuild_index();

  VocabMode mode_ = VocabMode::Char;
  std::vector<std::string> symbols_;
  std::vector<std::pair<std::string, std::string>> merges_;
  // Ids of each merge's left, right and merged symbols, parallel to merges_.
  std::vector<std::array<TokenId, 3>> merge_ids_;
  std::unordered_map<std::string, TokenId> index_;

  friend TokenSequence encode(std::string_view, const Vocab&);
};

Vocab build_char_vocab();

/// Greedy byte-pair training: each round merges the most frequent adjacent pair,
/// ties broken by the lexicographically smallest merged string. Stops early if
/// no adjacent pair remains.
Vocab train_bpe(std::span<const std::string> corpus, int num_merges);

/// Split into tile characters, then apply merges in training order.
TokenSequence encode(std::string_view text, const Vocab& vocab);

/// Concatenate token strings; specials decode to nothing.
std::string decode(std::span<const TokenId> tokens, const Vocab& vocab);

Vocab load_vocab(const std::filesystem::path& path);
void save_vocab(const std::filesystem::path& path, const Vocab& vocab);

}  // namespace mario
