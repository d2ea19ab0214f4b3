#pragma once

#include <stdexcept>
#include <string>

namespace treelcm {

// Every failure surfaced by the library carries a short machine-readable code
// ("newick_syntax", "invalid_tree", "dimension_mismatch", "schema", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace treelcm
