#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace chroma::cli {

// Exit codes shared by every verb.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // gradcheck failures, unexpected errors
inline constexpr int kExitConfig = 2;   // usage and configuration
inline constexpr int kExitData = 3;     // data and file I/O
inline constexpr int kExitNumeric = 4;  // non-finite values during training

// Runs one command line (without the program name). Status text goes to
// `out`, diagnostics and usage to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chroma::cli
