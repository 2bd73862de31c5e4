#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace clude::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kNumericError = 3 };

/// Runs one `clude` command. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clude::cli
