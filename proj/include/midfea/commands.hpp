#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace midfea {

/// Process exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4 };

/// Runs the command line `args` (without the program name). Normal output
/// goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Stage names accepted by export-maps.
const std::vector<std::string>& export_stage_names();

}  // namespace midfea
