#include "mario/tokenizer.hpp"

#include <map>
#include <sstream>

#include "mario/corpus.hpp"
#include "mario/error.hpp"

namespace mario {

namespace {

constexpr std::array<const char*, 4> kSpecialNames = {"<pad>", "<s>", "</s>", "<mask>"};
constexpr std::string_view kVocabMagic = "mario-vocab";
constexpr int kVocabVersion = 1;

// Replace every non-overlapping (left, right) occurrence, scanning left to right.
void apply_merge(std::vector<TokenId>& seq, TokenId left, TokenId right, TokenId merged) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < seq.size(); ++out) {
    if (i + 1 < seq.size() && seq[i] == left && seq[i + 1] == right) {
      seq[out] = merged;
      i += 2;
    } else {
      seq[out] = seq[i];
      i += 1;
    }
  }
  seq.resize(out);
}

std::vector<TokenId> split_chars(std::string_view text) {
  std::vector<TokenId> seq;
  seq.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int id = tile_index(text[i]);
    if (id < 0) throw UnknownSymbolError(text[i], static_cast<int>(i % kLevelHeight), static_cast<int>(i / kLevelHeight));
    seq.push_back(id);
  }
  return seq;
}

}  // namespace

const std::string& Vocab::symbol(TokenId id) const {
  if (!contains(id)) throw Error(ErrorCode::UnknownId, "token id " + std::to_string(id));
  return symbols_[id];
}

TokenId Vocab::find(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  return it == index_.end() ? -1 : it->second;
}

TokenId Vocab::add_symbol(const std::string& s) {
  if (auto it = index_.find(s); it != index_.end()) return it->second;
  const TokenId id = size();
  symbols_.push_back(s);
  index_.emplace(s, id);
  return id;
}

void Vocab::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], static_cast<TokenId>(i)).second) {
      throw Error(ErrorCode::BadFormat, "duplicate vocab symbol '" + symbols_[i] + "'");
    }
  }
  merge_ids_.clear();
  for (const auto& [l, r] : merges_) {
    const TokenId li = find(l), ri = find(r), mi = find(l + r);
    if (li < 0 || ri < 0 || mi < 0) throw Error(ErrorCode::BadFormat, "merge references unknown symbol");
    merge_ids_.push_back({li, ri, mi});
  }
}

Vocab build_char_vocab() {
  Vocab v;
  v.mode_ = VocabMode::Char;
  for (char c : kTileSymbols) v.add_symbol(std::string(1, c));
  for (const char* s : kSpecialNames) v.add_symbol(s);
  return v;
}

Vocab train_bpe(std::span<const std::string> corpus, int num_merges) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "BPE training corpus is empty");
  if (num_merges < 0) throw Error(ErrorCode::BadConfig, "num_merges must be >= 0");

  Vocab v = build_char_vocab();
  v.mode_ = VocabMode::Bpe;

  std::vector<std::vector<TokenId>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& s : corpus) seqs.push_back(split_chars(s));

  for (int m = 0; m < num_merges; ++m) {
    std::map<std::pair<TokenId, TokenId>, long long> counts;
    for (const auto& seq : seqs) {
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) ++counts[{seq[i], seq[i + 1]}];
    }
    if (counts.empty()) break;

    const std::pair<TokenId, TokenId>* best = nullptr;
    long long best_count = 0;
    std::string best_str;
    for (const auto& [pair, count] : counts) {
      std::string merged = v.symbols_[pair.first] + v.symbols_[pair.second];
      if (best == nullptr || count > best_count || (count == best_count && merged < best_str)) {
        best = &pair;
        best_count = count;
        best_str = std::move(merged);
      }
    }
    const auto [left, right] = *best;
    const TokenId merged = v.add_symbol(best_str);
    v.merges_.emplace_back(v.symbols_[left], v.symbols_[right]);
    v.merge_ids_.push_back({left, right, merged});
    for (auto& seq : seqs) apply_merge(seq, left, right, merged);
  }
  return v;
}

TokenSequence encode(std::string_view text, const Vocab& vocab) {
  std::vector<TokenId> seq = split_chars(text);
  for (const auto& [left, right, merged] : vocab.merge_ids_) apply_merge(seq, left, right, merged);
  return seq;
}

std::string decode(std::span<const TokenId> tokens, const Vocab& vocab) {
  std::string out;
  for (TokenId t : tokens) {
    const std::string& s = vocab.symbol(t);
    if (!vocab.is_special(t)) out += s;
  }
  return out;
}

std::string Vocab::serialize() const {
  std::ostringstream out;
  out << kVocabMagic << ' ' << kVocabVersion << " mode=" << (mode_ == VocabMode::Char ? "char" : "bpe")
      << " symbols=" << symbols_.size() << " merges=" << merges_.size() << '\n';
  for (const auto& s : symbols_) out << s << '\n';
  for (const auto& [l, r] : merges_) out << l << '\t' << r << '\n';
  return out.str();
}

Vocab Vocab::deserialize(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string magic, mode_field, symbols_field, merges_field;
  int version = 0;
  if (!(in >> magic >> version >> mode_field >> symbols_field >> merges_field) || magic != kVocabMagic) {
    throw Error(ErrorCode::BadFormat, "not a vocab file");
  }
  if (version != kVocabVersion) throw Error(ErrorCode::BadFormat, "unsupported vocab version " + std::to_string(version));
  auto value_of = [](const std::string& field, std::string_view key) {
    if (field.rfind(key, 0) != 0) throw Error(ErrorCode::BadFormat, "expected " + std::string(key));
    return field.substr(key.size());
  };
  Vocab v;
  const std::string mode = value_of(mode_field, "mode=");
  if (mode == "char") {
    v.mode_ = VocabMode::Char;
  } else if (mode == "bpe") {
    v.mode_ = VocabMode::Bpe;
  } else {
    throw Error(ErrorCode::BadFormat, "unknown vocab mode " + mode);
  }
  const long n_symbols = std::stol(value_of(symbols_field, "symbols="));
  const long n_merges = std::stol(value_of(merges_field, "merges="));
  std::string line;
  std::getline(in, line);
  for (long i = 0; i < n_symbols; ++i) {
    if (!std::getline(in, line)) throw Error(ErrorCode::BadFormat, "truncated symbol table");
    v.symbols_.push_back(line);
  }
  for (long i = 0; i < n_merges; ++i) {
    if (!std::getline(in, line)) throw Error(ErrorCode::BadFormat, "truncated merge list");
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(ErrorCode::BadFormat, "malformed merge line");
    v.merges_.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  const Vocab base = build_char_vocab();
  if (v.symbols_.size() < static_cast<std::size_t>(kNumBase) ||
      !std::equal(base.symbols_.begin(), base.symbols_.end(), v.symbols_.begin())) {
    throw Error(ErrorCode::BadFormat, "vocab does not start with the tile and special symbols");
  }
  if (v.mode_ == VocabMode::Char && (!v.merges_.empty() || v.symbols_.size() != kNumBase)) {
    throw Error(ErrorCode::BadFormat, "char vocab must not carry merges");
  }
  v.rebuild_index();
  return v;
}

Vocab load_vocab(const std::filesystem::path& path) { return Vocab::deserialize(read_text_file(path)); }

void save_vocab(const std::filesystem::path& path, const Vocab& vocab) { write_text_file(path, vocab.serialize()); }

}  // namespace mario
