#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mmmt {

/// Exit codes: 0 success, 1 runtime or data failure, 2 usage or config failure.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Entry point behind the `mmmt` executable. `args` excludes the program name.
/// Subcommands: gen, stats, table1, train, ablate, eval, predict, gradcheck.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmmt
