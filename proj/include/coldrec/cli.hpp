#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace coldrec {

/// Runs one subcommand; `args` excludes the program name. Returns 0 on
/// success, 1 on runtime failure and 2 on usage errors. Artifacts written to
/// "-" go to `out`; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Inserts the flags held in a `--config FILE` JSON object that are not
/// already on the command line. Keys may use '_' or '-'; true booleans become
/// bare flags, arrays are joined with commas.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace coldrec
