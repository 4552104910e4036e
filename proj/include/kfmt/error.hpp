#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kfmt {

enum class ErrorCode {
  invalid_argument,
  schema_violation,
  missing_file,
  config_invalid,
  // gateway
  backend_unreachable,
  backend_rejected,
  backend_not_registered,
  cache_io_error,
  // parsing
  unparseable,
  out_of_range,
  empty_input,
  // fusion
  scorer_unavailable,
  candidate_coverage_gap,
  missing_references,
  empty_candidate_set,
  // numerics
  length_mismatch,
  invalid_weights,
  vocab_mismatch,
  zero_probability,
  zero_vector,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace kfmt
