#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace acort {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one `acort` command. `args` excludes the program name. Data goes to
/// `out`, logs and errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace acort
