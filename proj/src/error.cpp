#include "mario/error.hpp"

namespace mario {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::RaggedLines: return "RaggedLines";
    case ErrorCode::BadHeight: return "BadHeight";
    case ErrorCode::UnknownSymbol: return "UnknownSymbol";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::EmptySpec: return "EmptySpec";
    case ErrorCode::BadClause: return "BadClause";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::DuplicateFeature: return "DuplicateFeature";
    case ErrorCode::BadWindowWidth: return "BadWindowWidth";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::EmptyPrompt: return "EmptyPrompt";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidTemperature: return "InvalidTemperature";
    case ErrorCode::NonColumnSeed: return "NonColumnSeed";
    case ErrorCode::SpanOutOfBounds: return "SpanOutOfBounds";
    case ErrorCode::EmptyValidation: return "EmptyValidation";
    case ErrorCode::LevelWiderThanCorpus: return "LevelWiderThanCorpus";
    case ErrorCode::BadStart: return "BadStart";
    case ErrorCode::NoPath: return "NoPath";
    case ErrorCode::EmptyArchive: return "EmptyArchive";
    case ErrorCode::ParentTooNarrow: return "ParentTooNarrow";
    case ErrorCode::Io: return "Io";
    case ErrorCode::BadFormat: return "BadFormat";
  }
  return "Unknown";
}

std::string UnknownSymbolError::describe(char symbol, int row, int col) {
  std::string printable = (symbol >= 32 && symbol < 127) ? std::string(1, symbol)
                                                          : "\\x" + std::to_string(static_cast<unsigned char>(symbol));
  return "'" + printable + "' at row " + std::to_string(row) + ", col " + std::to_string(col);
}

}  // namespace mario
