#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace condpar {

enum class ErrorKind {
  kParameter,
  kShape,
  kStepUnderflow,
  kNumeric,
  kDegenerateInput,
  kInsufficientHistory,
  kSequencing,
  kPlan,
  kParse,
  kIo,
};

std::string_view to_string(ErrorKind kind);

/// Base of every error thrown by the library. `kind()` is stable and is what
/// the CLI reports in its machine-readable error object.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Invalid scalar parameter; `field()` names the offending field.
class ParameterError : public Error {
 public:
  ParameterError(std::string field, const std::string& message)
      : Error(ErrorKind::kParameter, field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message)
      : Error(ErrorKind::kShape, message) {}
};

class StepUnderflowError : public Error {
 public:
  explicit StepUnderflowError(const std::string& message)
      : Error(ErrorKind::kStepUnderflow, message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message)
      : Error(ErrorKind::kNumeric, message) {}
};

class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& message)
      : Error(ErrorKind::kDegenerateInput, message) {}
};

class InsufficientHistoryError : public Error {
 public:
  explicit InsufficientHistoryError(const std::string& message)
      : Error(ErrorKind::kInsufficientHistory, message) {}
};

class SequencingError : public Error {
 public:
  explicit SequencingError(const std::string& message)
      : Error(ErrorKind::kSequencing, message) {}
};

class PlanError : public Error {
 public:
  explicit PlanError(const std::string& message)
      : Error(ErrorKind::kPlan, message) {}
};

/// Malformed input text. `line()` is 1-based, 0 when not line oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line = 0)
      : Error(ErrorKind::kParse,
              line == 0 ? message
                        : "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  IoError(std::string path, const std::string& message)
      : Error(ErrorKind::kIo, path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace condpar
