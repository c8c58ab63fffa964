#pragma once

// Command-line front end. Subcommands: fit, simulate, diagnose, ppc, apc,
// transitions, viterbi, serial. Exit codes: 0 success, 2 input error,
// 3 numerical failure, 1 anything else.

#include <iosfwd>
#include <string>
#include <vector>

namespace mehmm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mehmm::cli
