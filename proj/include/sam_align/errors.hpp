// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sam_align {

// Base of every pipeline failure. `kind()` is the machine-readable name that
// ends up in the CLI's JSON error envelope.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message);

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Bad command line or configuration; maps to exit code 2.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message) : Error("UsageError", message) {}
};

}  // namespace sam_align
