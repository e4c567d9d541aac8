#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mario {

/// Levels are always 14 tiles tall.
inline constexpr int kLevelHeight = 14;

/// The closed tile alphabet, in canonical order. 'x' marks the annotated path.
inline constexpr std::array<char, 14> kTileSymbols = {'-', 'X', 'S', '?', 'Q', 'o', 'E',
                                                       '<', '>', '[', ']', 'B', 'b', 'x'};

inline constexpr char kEmpty = '-';
inline constexpr char kPath = 'x';

bool is_tile(char c) noexcept;

/// Index of a tile symbol in kTileSymbols, or -1.
int tile_index(char c) noexcept;

/// Rectangular grid of tiles, row 0 at the top.
class LevelGrid {
 public:
  LevelGrid() = default;

  /// Grid of the given width filled with `fill`.
  explicit LevelGrid(int width, char fill = kEmpty);

  int height() const noexcept { return kLevelHeight; }
  int width() const noexcept { return width_; }

  char at(int row, int col) const { return rows_[row][col]; }
  void set(int row, int col, char tile);

  const std::string& row(int r) const { return rows_[r]; }
  const std::array<std::string, kLevelHeight>& rows() const noexcept { return rows_; }

  /// Top-to-bottom column text.
  std::string column(int col) const;

  bool operator==(const LevelGrid&) const = default;

 private:
  friend LevelGrid parse_level(std::string_view);
  friend LevelGrid unflatten(std::string_view, int);
  friend LevelGrid stitch(std::span<const LevelGrid>);
  friend LevelGrid slice(const LevelGrid&, int, int);

  int width_ = 0;
  std::array<std::string, kLevelHeight> rows_{};
};

/// Parse a 14-line level. A single trailing newline is accepted.
LevelGrid parse_level(std::string_view text);

/// Inverse of parse_level: 14 lines, each terminated by '\n'.
std::string render_ascii(const LevelGrid& grid);

/// Concatenate levels left to right.
LevelGrid stitch(std::span<const LevelGrid> levels);

/// Copy of columns [start_col, start_col + width).
LevelGrid slice(const LevelGrid& grid, int start_col, int width);

/// Column-major serialization: each column top-to-bottom, columns left to right.
std::string flatten(const LevelGrid& grid);

LevelGrid unflatten(std::string_view text, int height = kLevelHeight);

/// Paths listed in a corpus manifest, resolved relative to the manifest directory.
/// Blank lines and '#' comments are ignored.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);

LevelGrid load_level_file(const std::filesystem::path& path);
void save_level_file(const std::filesystem::path& path, const LevelGrid& grid);

struct Corpus {
  std::vector<std::filesystem::path> files;
  std::vector<LevelGrid> levels;
  LevelGrid stitched;
};

/// Load every level named in the manifest, in manifest order, and stitch them.
Corpus load_corpus(const std::filesystem::path& manifest);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace mario
