#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ddnerf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Runs one command line (args[0] is the program name). Messages go to out
/// and err; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ddnerf::cli
