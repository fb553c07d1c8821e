#pragma once

#include <string>
#include <vector>

namespace irloss::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kIoError = 3,
  kDiverged = 4,
  kCorruptCheckpoint = 5,
};

/// Entry point for the `irloss` tool. Subcommands: gen-data, train, eval,
/// sweep, gradcheck.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace irloss::cli
