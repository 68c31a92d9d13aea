#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ismallnet {

/// Exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitInvariant = 1, kExitUsage = 2 };

/// Entry point of the `ismallnet` tool; args excludes the program name.
/// Subcommands: synth, decouple, train, eval, predict, compare.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ismallnet
