#pragma once

#include <iosfwd>

namespace gramdiff {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitNumericalError = 3;

// Entry point of the gramdiff tool: gen-data, train, extract, decode,
// forecast, eval. Normal output goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gramdiff
