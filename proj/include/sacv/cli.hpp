#pragma once

// The `sacv` command-line tool: toy-demo, probe-train, explain, rf, report.
// Exit codes: 0 success, 1 usage error, 2 runtime or domain error.

#include <ostream>

namespace sacv {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDomain = 2;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sacv
