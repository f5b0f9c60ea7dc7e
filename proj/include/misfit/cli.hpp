#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace misfit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one command line. args[0] is the program name. Returns the exit status:
/// 0 on success (and --help), 1 on usage errors, 2 on runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace misfit
