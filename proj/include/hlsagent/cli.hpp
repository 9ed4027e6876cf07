#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hlsagent {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitBackend = 3;

/// Entry point of the `hlsagent` command. `args` excludes the program name.
/// Errors are reported as one line on `err` and mapped to an exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hlsagent
