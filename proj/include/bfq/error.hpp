#pragma once

#include <stdexcept>
#include <string>

namespace bfq {

// Every failure carries a short machine-readable code ("shape", "singular",
// "dimension", ...) plus a human-readable detail. what() is "code: detail".
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace bfq
