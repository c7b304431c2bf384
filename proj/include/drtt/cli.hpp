#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace drtt {

/// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one `drtt` command. `args` excludes the program name.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace drtt
