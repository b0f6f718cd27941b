#pragma once

#include <iosfwd>

namespace reldetr::cli {

enum ExitCode : int { ok = 0, failed_check = 1, usage_error = 2, numeric_failure = 3 };

/// Entry point of the `reldetr` executable with injectable streams.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace reldetr::cli
