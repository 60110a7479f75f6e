#pragma once

#include <iosfwd>

namespace helix::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Parses argv, runs one subcommand and returns the exit status. Messages go
/// to `err`; progress lines go to `log`.
int run_command(int argc, const char* const* argv, std::ostream& log, std::ostream& err);

}  // namespace helix::cli
