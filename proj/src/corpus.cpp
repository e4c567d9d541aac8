#include "mario/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "mario/error.hpp"

namespace mario {

namespace fs = std::filesystem;

bool is_tile(char c) noexcept { return tile_index(c) >= 0; }

int tile_index(char c) noexcept {
  for (std::size_t i = 0; i < kTileSymbols.size(); ++i) {
    if (kTileSymbols[i] == c) return static_cast<int>(i);
  }
  return -1;
}

LevelGrid::LevelGrid(int width, char fill) : width_(width) {
  if (width < 1) throw Error(ErrorCode::BadLength, "grid width must be >= 1");
  if (!is_tile(fill)) throw UnknownSymbolError(fill, 0, 0);
  for (auto& r : rows_) r.assign(static_cast<std::size_t>(width), fill);
}

void LevelGrid::set(int row, int col, char tile) {
  if (!is_tile(tile)) throw UnknownSymbolError(tile, row, col);
  rows_[row][col] = tile;
}

std::string LevelGrid::column(int col) const {
  std::string out(kLevelHeight, kEmpty);
  for (int r = 0; r < kLevelHeight; ++r) out[r] = rows_[r][col];
  return out;
}

LevelGrid parse_level(std::string_view text) {
  if (!text.empty() && text.back() == '\n') text.remove_suffix(1);

  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (true) {
    std::size_t nl = text.find('\n', pos);
    lines.push_back(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (lines.size() != kLevelHeight) {
    throw Error(ErrorCode::BadHeight, "expected 14 lines, got " + std::to_string(lines.size()));
  }
  const std::size_t width = lines.front().size();
  for (std::size_t r = 0; r < lines.size(); ++r) {
    if (lines[r].size() != width) {
      throw Error(ErrorCode::RaggedLines, "line " + std::to_string(r) + " has length " +
                                              std::to_string(lines[r].size()) + ", expected " +
                                              std::to_string(width));
    }
  }
  if (width == 0) throw Error(ErrorCode::BadLength, "level has zero width");

  LevelGrid grid;
  grid.width_ = static_cast<int>(width);
  for (int r = 0; r < kLevelHeight; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      if (!is_tile(lines[r][c])) throw UnknownSymbolError(lines[r][c], r, static_cast<int>(c));
    }
    grid.rows_[r] = std::string(lines[r]);
  }
  return grid;
}

std::string render_ascii(const LevelGrid& grid) {
  std::string out;
  out.reserve(static_cast<std::size_t>(kLevelHeight) * (grid.width() + 1));
  for (const auto& r : grid.rows()) {
    out += r;
    out += '\n';
  }
  return out;
}

LevelGrid stitch(std::span<const LevelGrid> levels) {
  if (levels.empty()) throw Error(ErrorCode::EmptyList, "nothing to stitch");
  LevelGrid out;
  for (const auto& level : levels) {
    for (int r = 0; r < kLevelHeight; ++r) out.rows_[r] += level.rows_[r];
    out.width_ += level.width_;
  }
  return out;
}

LevelGrid slice(const LevelGrid& grid, int start_col, int width) {
  if (width < 1 || start_col < 0 || start_col + width > grid.width()) {
    throw Error(ErrorCode::OutOfBounds, "slice [" + std::to_string(start_col) + ", " +
                                            std::to_string(start_col + width) + ") of width-" +
                                            std::to_string(grid.width()) + " grid");
  }
  LevelGrid out;
  out.width_ = width;
  for (int r = 0; r < kLevelHeight; ++r) out.rows_[r] = grid.rows_[r].substr(start_col, width);
  return out;
}

std::string flatten(const LevelGrid& grid) {
  std::string out;
  out.reserve(static_cast<std::size_t>(kLevelHeight) * grid.width());
  for (int c = 0; c < grid.width(); ++c) {
    for (int r = 0; r < kLevelHeight; ++r) out += grid.at(r, c);
  }
  return out;
}

LevelGrid unflatten(std::string_view text, int height) {
  if (height != kLevelHeight) throw Error(ErrorCode::BadHeight, "height must be 14");
  if (text.empty() || text.size() % kLevelHeight != 0) {
    throw Error(ErrorCode::BadLength, "length " + std::to_string(text.size()) + " is not a positive multiple of 14");
  }
  LevelGrid grid;
  grid.width_ = static_cast<int>(text.size() / kLevelHeight);
  for (auto& r : grid.rows_) r.resize(static_cast<std::size_t>(grid.width_));
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int col = static_cast<int>(i / kLevelHeight);
    const int row = static_cast<int>(i % kLevelHeight);
    if (!is_tile(text[i])) throw UnknownSymbolError(text[i], row, col);
    grid.rows_[row][col] = text[i];
  }
  return grid;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::vector<fs::path> read_manifest(const fs::path& manifest) {
  const std::string text = read_text_file(manifest);
  std::vector<fs::path> files;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    line.erase(line.begin(), std::find_if(line.begin(), line.end(), not_space));
    line.erase(std::find_if(line.rbegin(), line.rend(), not_space).base(), line.end());
    if (line.empty()) continue;
    files.push_back(manifest.parent_path() / line);
  }
  if (files.empty()) throw Error(ErrorCode::EmptyList, "manifest " + manifest.string() + " lists no levels");
  return files;
}

LevelGrid load_level_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return parse_level(text);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

void save_level_file(const fs::path& path, const LevelGrid& grid) { write_text_file(path, render_ascii(grid)); }

Corpus load_corpus(const fs::path& manifest) {
  Corpus corpus;
  corpus.files = read_manifest(manifest);
  for (const auto& f : corpus.files) corpus.levels.push_back(load_level_file(f));
  corpus.stitched = stitch(corpus.levels);
  return corpus;
}

}  // namespace mario
