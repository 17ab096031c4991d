// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sam_align/http.hpp"

namespace sam_align {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct CliEnvironment {
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
  // SAM_ALIGN__* overrides are read from here; may be null.
  char** envp = nullptr;
  // Network access for fetch/caption; defaults to the real HTTP client.
  Transport transport;
};

// args[0] is the program name. Returns the process exit code.
int run_command(const std::vector<std::string>& args, const CliEnvironment& env);

}  // namespace sam_align
