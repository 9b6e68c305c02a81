#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace reiqa {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// The `reiqa` command line. args excludes the program name. Returns the
/// process exit code: 0 on success, 2 for usage errors, 1 for runtime
/// failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace reiqa
