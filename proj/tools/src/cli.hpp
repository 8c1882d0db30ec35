#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace svj::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitModuleError = 1;
inline constexpr int kExitConfigError = 2;

// Entry point behind the svj binary. Prints the run directory on `out` and
// diagnostics on `err`; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace svj::cli
