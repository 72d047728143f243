#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mp3net::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kParse = 2, kCompute = 3 };

// Runs the command line `args` (args[0] is the program name). Normal output goes to `out`,
// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mp3net::cli
