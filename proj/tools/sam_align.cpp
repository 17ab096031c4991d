// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "sam_align/cli.hpp"

extern char** environ;

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  sam_align::CliEnvironment env;
  env.out = &std::cout;
  env.err = &std::cerr;
  env.envp = environ;
  return sam_align::run_command(args, env);
}
