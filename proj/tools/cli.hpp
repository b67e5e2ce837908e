#pragma once

#include <ostream>

namespace kto::cli {

/// Exit codes.
enum ExitCode : int { ok = 0, usage = 2, input = 3, numerical = 4 };

/// Runs one command line. Errors are reported on err as
/// "error: class=<config|input|numerical> message=<text>".
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kto::cli
