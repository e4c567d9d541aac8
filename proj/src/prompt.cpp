#include "mario/prompt.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

#include "mario/error.hpp"

namespace mario {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::optional<int> parse_count(std::string_view word) {
  if (word.empty() || word.size() > 4) return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), value);
  if (ec != std::errc{} || ptr != word.data() + word.size() || value < 0 || value > 1000) return std::nullopt;
  return value;
}

std::optional<Quantity> parse_quantity(std::string_view word) {
  if (word == "no") return Quantity::No;
  if (word == "little") return Quantity::Little;
  if (word == "some") return Quantity::Some;
  if (word == "many") return Quantity::Many;
  return std::nullopt;
}

Quantity band(int count, int little, int some, int many) {
  if (count >= many) return Quantity::Many;
  if (count >= some) return Quantity::Some;
  if (count >= little) return Quantity::Little;
  return Quantity::No;
}

std::string amount_text(const Amount& a) {
  if (const auto* q = std::get_if<Quantity>(&a)) return to_string(*q);
  return std::to_string(std::get<int>(a));
}

bool amount_matches(const Amount& wanted, int count, Quantity actual) {
  if (const auto* q = std::get_if<Quantity>(&wanted)) return *q == actual;
  return std::get<int>(wanted) == count;
}

constexpr std::array<std::string_view, 11> kPromptWords = {",",     "no",    "little",  "some",   "many",     "low",
                                                           "high", "pipes", "enemies", "blocks", "elevation"};

}  // namespace

std::string to_string(Quantity q) {
  switch (q) {
    case Quantity::No: return "no";
    case Quantity::Little: return "little";
    case Quantity::Some: return "some";
    case Quantity::Many: return "many";
  }
  return "?";
}

std::string to_string(Elevation e) { return e == Elevation::Low ? "low" : "high"; }

QuantileConfig parse_quantile_config(std::string_view text) {
  QuantileConfig cfg;
  const std::map<std::string, int*> fields = {
      {"pipes.little", &cfg.pipes_little},     {"pipes.some", &cfg.pipes_some},
      {"pipes.many", &cfg.pipes_many},         {"enemies.little", &cfg.enemies_little},
      {"enemies.some", &cfg.enemies_some},     {"enemies.many", &cfg.enemies_many},
      {"blocks.some", &cfg.blocks_some},       {"blocks.many", &cfg.blocks_many},
      {"elevation.high_below_row", &cfg.elevation_high_below_row},
  };
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::BadFormat, "line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    auto it = fields.find(key);
    if (it == fields.end()) throw Error(ErrorCode::BadFormat, "line " + std::to_string(line_no) + ": unknown key " + key);
    int v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
      throw Error(ErrorCode::BadFormat, "line " + std::to_string(line_no) + ": bad integer " + value);
    }
    *it->second = v;
  }
  const bool ordered = cfg.pipes_little <= cfg.pipes_some && cfg.pipes_some <= cfg.pipes_many &&
                       cfg.enemies_little <= cfg.enemies_some && cfg.enemies_some <= cfg.enemies_many &&
                       cfg.blocks_some <= cfg.blocks_many;
  if (!ordered) throw Error(ErrorCode::BadConfig, "quantile edges must be nondecreasing");
  return cfg;
}

std::string render_quantile_config(const QuantileConfig& c) {
  std::ostringstream out;
  out << "# Lower band edges: a count takes the keyword of the largest edge it reaches.\n"
      << "pipes.little=" << c.pipes_little << "\npipes.some=" << c.pipes_some << "\npipes.many=" << c.pipes_many
      << "\nenemies.little=" << c.enemies_little << "\nenemies.some=" << c.enemies_some
      << "\nenemies.many=" << c.enemies_many << "\n# blocks below blocks.some are \"little\"\nblocks.some=" << c.blocks_some
      << "\nblocks.many=" << c.blocks_many << "\nelevation.high_below_row=" << c.elevation_high_below_row << '\n';
  return out.str();
}

QuantileConfig load_quantile_config(const std::filesystem::path& path) {
  return parse_quantile_config(read_text_file(path));
}

FeatureCounts count_features(const LevelGrid& window, bool any_width) {
  if (!any_width && window.width() != kWindowColumns) {
    throw Error(ErrorCode::BadWindowWidth, "window is " + std::to_string(window.width()) + " columns, expected 50");
  }
  FeatureCounts counts;
  for (int r = 0; r < window.height(); ++r) {
    for (char t : window.row(r)) {
      switch (t) {
        case '<': ++counts.pipes; break;
        case 'E': ++counts.enemies; break;
        case 'X':
          ++counts.blocks;
          if (!counts.elevation_row) counts.elevation_row = r;
          break;
        case 'S':
        case '?':
        case 'Q':
        case 'B':
        case 'b': ++counts.blocks; break;
        default: break;
      }
    }
  }
  return counts;
}

PromptSpec quantize(const FeatureCounts& counts, const QuantileConfig& c) {
  PromptSpec spec;
  spec.pipes = band(counts.pipes, c.pipes_little, c.pipes_some, c.pipes_many);
  spec.enemies = band(counts.enemies, c.enemies_little, c.enemies_some, c.enemies_many);
  const Quantity blocks = band(counts.blocks, 0, c.blocks_some, c.blocks_many);
  spec.blocks = blocks == Quantity::No ? Quantity::Little : blocks;
  spec.elevation = counts.elevation_row && *counts.elevation_row < c.elevation_high_below_row ? Elevation::High
                                                                                             : Elevation::Low;
  return spec;
}

std::string compose_prompt(const PromptSpec& spec) {
  if (spec.empty()) throw Error(ErrorCode::EmptySpec, "prompt has no features");
  std::vector<std::string> clauses;
  if (spec.pipes) clauses.push_back(amount_text(*spec.pipes) + " pipes");
  if (spec.enemies) clauses.push_back(amount_text(*spec.enemies) + " enemies");
  if (spec.blocks) clauses.push_back(amount_text(*spec.blocks) + " blocks");
  if (spec.elevation) clauses.push_back(to_string(*spec.elevation) + " elevation");
  std::string out;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i) out += ", ";
    out += clauses[i];
  }
  return out;
}

PromptSpec parse_prompt(std::string_view text) {
  PromptSpec spec;
  if (trim(text).empty()) throw Error(ErrorCode::EmptySpec, "empty prompt");
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string clause =
        lower(trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    pos = comma == std::string_view::npos ? text.size() + 1 : comma + 1;

    std::istringstream words(clause);
    std::string quantity, feature, extra;
    if (!(words >> quantity >> feature) || (words >> extra)) {
      throw Error(ErrorCode::BadClause, "expected '<quantity> <feature>', got '" + clause + "'");
    }
    const bool is_amount_feature = feature == "pipes" || feature == "enemies" || feature == "blocks";
    if (!is_amount_feature && feature != "elevation") throw Error(ErrorCode::UnknownFeature, "'" + feature + "'");

    if (feature == "elevation") {
      if (spec.elevation) throw Error(ErrorCode::DuplicateFeature, "elevation");
      if (quantity == "low") {
        spec.elevation = Elevation::Low;
      } else if (quantity == "high") {
        spec.elevation = Elevation::High;
      } else {
        throw Error(ErrorCode::BadClause, "elevation must be low or high, got '" + quantity + "'");
      }
      continue;
    }

    std::optional<Amount>& slot = feature == "pipes" ? spec.pipes : feature == "enemies" ? spec.enemies : spec.blocks;
    if (slot) throw Error(ErrorCode::DuplicateFeature, feature);
    if (auto q = parse_quantity(quantity)) {
      if (*q == Quantity::No && feature == "blocks") throw Error(ErrorCode::BadClause, "'no blocks' is not in the grammar");
      slot = *q;
    } else if (auto n = parse_count(quantity)) {
      slot = *n;
    } else {
      throw Error(ErrorCode::BadClause, "bad quantity '" + quantity + "' for " + feature);
    }
  }
  return spec;
}

bool PromptMatch::all() const noexcept {
  for (const auto& m : {pipes, enemies, blocks, elevation}) {
    if (m && !*m) return false;
  }
  return true;
}

PromptMatch prompt_match(const LevelGrid& level, const PromptSpec& spec, const QuantileConfig& config) {
  const FeatureCounts counts = count_features(level, /*any_width=*/true);
  const PromptSpec actual = quantize(counts, config);
  PromptMatch m;
  if (spec.pipes) m.pipes = amount_matches(*spec.pipes, counts.pipes, std::get<Quantity>(*actual.pipes));
  if (spec.enemies) m.enemies = amount_matches(*spec.enemies, counts.enemies, std::get<Quantity>(*actual.enemies));
  if (spec.blocks) m.blocks = amount_matches(*spec.blocks, counts.blocks, std::get<Quantity>(*actual.blocks));
  if (spec.elevation) m.elevation = *spec.elevation == *actual.elevation;
  return m;
}

PromptSpec random_prompt(Rng& rng) {
  PromptSpec spec;
  spec.pipes = static_cast<Quantity>(uniform_int(rng, 0, 3));
  spec.enemies = static_cast<Quantity>(uniform_int(rng, 0, 3));
  spec.blocks = static_cast<Quantity>(uniform_int(rng, 1, 3));
  spec.elevation = uniform_int(rng, 0, 1) == 0 ? Elevation::Low : Elevation::High;
  return spec;
}

std::vector<int> tokenize_prompt(std::string_view text) {
  std::vector<int> ids;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    const std::string w = lower(word);
    word.clear();
    if (std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); })) {
      for (char d : w) ids.push_back(static_cast<int>(kPromptWords.size()) + (d - '0'));
      return;
    }
    auto it = std::find(kPromptWords.begin(), kPromptWords.end(), w);
    if (it == kPromptWords.end()) throw Error(ErrorCode::BadClause, "unknown prompt word '" + w + "'");
    ids.push_back(static_cast<int>(it - kPromptWords.begin()));
  };
  for (char c : text) {
    if (c == ',') {
      flush();
      ids.push_back(0);
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      word += c;
    }
  }
  flush();
  return ids;
}

std::vector<WindowAnnotation> annotate_windows(const LevelGrid& level, int stride, const QuantileConfig& config) {
  if (stride < 1) throw Error(ErrorCode::BadConfig, "stride must be >= 1");
  std::vector<WindowAnnotation> out;
  for (int start = 0; start + kWindowColumns <= level.width(); start += stride) {
    out.push_back({start, quantize(count_features(slice(level, start, kWindowColumns)), config)});
  }
  return out;
}

}  // namespace mario
