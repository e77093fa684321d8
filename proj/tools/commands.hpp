#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace camsim::cli {

/// Runs one command line (args[0] is the program name). Errors are reported as
/// a single `error: <kind>: <message>` line on `err`; the return value is the
/// process exit code (0 ok, 1 failure, 2 usage).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace camsim::cli
