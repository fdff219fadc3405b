#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fusedgroup::cli {

enum ExitCode { kOk = 0, kBadInput = 1, kNotConverged = 2 };

/// Runs one command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace fusedgroup::cli
