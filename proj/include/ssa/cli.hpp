#pragma once

// Subcommand driver behind the `ssa` executable.

#include <iosfwd>
#include <string>
#include <vector>

namespace ssa {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitNumeric = 3,
};

/// Parses argv and runs one of simulate / train / fuse / eval / export-kernels / sweep.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

/// Convenience overload for tests: args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ssa
