#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace martlens {

// Error taxonomy shared by every module. The CLI maps any Error to exit
// code 1 and the service maps kinds onto HTTP statuses.
enum class ErrorKind {
  kSchema,
  kParse,
  kInvalidArgument,
  kInvalidFraction,
  kSingularMatrix,
  kNonFiniteInput,
  kSchemaMismatch,
  kScoreUndefined,
  kTooFewValues,
  kDimensionMismatch,
  kInvalidConfig,
  kInvalidScheme,
  kInvalidStride,
  kBadFraming,
  kEndpointUnreachable,
  kChecksumRejected,
  kNotFound,
  kIo,
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Malformed CSV content. `row` is the 1-based data row (the header is row 0).
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string column, const std::string& message);

  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

// An instance does not match the feature schema a model was trained on.
class SchemaMismatch : public Error {
 public:
  SchemaMismatch(std::vector<std::string> missing,
                 std::vector<std::string> extra);

  const std::vector<std::string>& missing() const { return missing_; }
  const std::vector<std::string>& extra() const { return extra_; }

 private:
  std::vector<std::string> missing_;
  std::vector<std::string> extra_;
};

}  // namespace martlens
