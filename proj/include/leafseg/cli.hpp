#pragma once

#include <string>
#include <vector>

namespace leafseg::cli {

// Entry point behind the leafseg binary: `args` is the argument vector
// without the program name. Returns the process exit status; failures print
// a one-line diagnostic on stderr.
int run_cli(std::vector<std::string> args);

}  // namespace leafseg::cli
