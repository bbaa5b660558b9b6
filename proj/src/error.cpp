#include "martlens/error.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace martlens {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kSchema: return "SchemaError";
    case ErrorKind::kParse: return "ParseError";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kInvalidFraction: return "InvalidFraction";
    case ErrorKind::kSingularMatrix: return "SingularMatrix";
    case ErrorKind::kNonFiniteInput: return "NonFiniteInput";
    case ErrorKind::kSchemaMismatch: return "SchemaMismatch";
    case ErrorKind::kScoreUndefined: return "ScoreUndefined";
    case ErrorKind::kTooFewValues: return "TooFewValues";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kInvalidScheme: return "InvalidScheme";
    case ErrorKind::kInvalidStride: return "InvalidStride";
    case ErrorKind::kBadFraming: return "BadFraming";
    case ErrorKind::kEndpointUnreachable: return "EndpointUnreachable";
    case ErrorKind::kChecksumRejected: return "ChecksumRejected";
    case ErrorKind::kNotFound: return "NotFound";
    case ErrorKind::kIo: return "IoError";
  }
  return "Error";
}

ParseError::ParseError(std::size_t row, std::string column,
                       const std::string& message)
    : Error(ErrorKind::kParse,
            fmt::format("row {}, column '{}': {}", row, column, message)),
      row_(row),
      column_(std::move(column)) {}

SchemaMismatch::SchemaMismatch(std::vector<std::string> missing,
                               std::vector<std::string> extra)
    : Error(ErrorKind::kSchemaMismatch,
            fmt::format("instance does not match schema (missing: [{}], "
                        "extra: [{}])",
                        fmt::join(missing, ", "), fmt::join(extra, ", "))),
      missing_(std::move(missing)),
      extra_(std::move(extra)) {}

}  // namespace martlens
