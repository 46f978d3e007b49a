#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace hyperleaf {

// Every failure in the toolkit carries a machine-parsable code. The CLI
// prints failures as a single "code: message" line and exits nonzero.
//
// Codes in use:
//   usage_error, config_error, io_error, format_error, dimension_error,
//   generation_error, normalization_error, singularity_error, metric_error,
//   training_error
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace hyperleaf
