#pragma once

#include <ostream>

namespace mtdlag::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kVerificationFailed = 3 };

/// Entry point of the `mtdlag` command-line tool. Normal output goes to
/// `out`, diagnostics to `err`; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mtdlag::cli
