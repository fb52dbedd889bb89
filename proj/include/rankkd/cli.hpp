#pragma once

#include <iosfwd>

namespace rankkd {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 2,
  kExitDivergence = 3,
  kExitCheckpoint = 4,
  kExitSweep = 5,
};

/// Entry point of the `rankkd` command-line tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rankkd
