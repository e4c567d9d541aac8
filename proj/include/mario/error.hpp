#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mario {

enum class ErrorCode {
  // corpus
  RaggedLines,
  BadHeight,
  UnknownSymbol,
  EmptyList,
  OutOfBounds,
  BadLength,
  // tokenizer
  EmptyCorpus,
  UnknownId,
  // prompt
  EmptySpec,
  BadClause,
  UnknownFeature,
  DuplicateFeature,
  BadWindowWidth,
  // model
  BadConfig,
  EmptyPrompt,
  SequenceTooLong,
  ShapeMismatch,
  InvalidTemperature,
  NonColumnSeed,
  SpanOutOfBounds,
  EmptyValidation,
  LevelWiderThanCorpus,
  // playability
  BadStart,
  // novelty
  NoPath,
  EmptyArchive,
  ParentTooNarrow,
  // persistence
  Io,
  BadFormat,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the error-code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

/// Raised for characters outside the tile alphabet; carries the offending location.
class UnknownSymbolError : public Error {
 public:
  UnknownSymbolError(char symbol, int row, int col)
      : Error(ErrorCode::UnknownSymbol, describe(symbol, row, col)), symbol_(symbol), row_(row), col_(col) {}

  char symbol() const noexcept { return symbol_; }
  int row() const noexcept { return row_; }
  int col() const noexcept { return col_; }

 private:
  static std::string describe(char symbol, int row, int col);

  char symbol_;
  int row_;
  int col_;
};

}  // namespace mario
