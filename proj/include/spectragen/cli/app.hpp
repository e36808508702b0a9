#pragma once

#include <ostream>

namespace spectragen::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kNumericalError = 3 };

/// Parses `argv` and runs one subcommand. Errors are reported on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spectragen::cli
