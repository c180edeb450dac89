#pragma once

#include <string>
#include <vector>

namespace dvgnn {

// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4 };

// Runs one command line; args exclude the program name. Errors are reported on
// stderr and mapped to an exit code (contract violations count as usage errors).
int run_cli(const std::vector<std::string>& args);

}  // namespace dvgnn
