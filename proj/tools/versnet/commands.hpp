#pragma once

#include <exception>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "options.hpp"

namespace versnet::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIo = 3,
  kNumeric = 4,
  kSchema = 5,
};

struct Command {
  CLI::App* app = nullptr;
  std::shared_ptr<OptionSet> options;
  std::function<int()> run;
};

std::vector<Command> register_commands(CLI::App& app);

/// Maps a library exception onto the documented exit codes.
int exit_code_for(const std::exception& e);

}  // namespace versnet::cli
