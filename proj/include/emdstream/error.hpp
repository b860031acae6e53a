#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emdstream {

enum class ErrorCode {
  invalid_argument,
  weight_mismatch,
  empty_input,
  too_large,
  infeasible,
  parse_error,
  range_error,
  size_mismatch,
  empty_stream,
  deletion_unsupported,
  distinct_bound_exceeded,
  all_levels_overflowed,
  cycle_encountered,
  model_violation,
  corrupt_blob,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Thrown by the stream parser; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCode::parse_error, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace emdstream
