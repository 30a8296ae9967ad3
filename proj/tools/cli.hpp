#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ncdforest::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `ncdforest` invocation. `args` excludes the program name.
/// Diagnostics go to `err` as one JSON object per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ncdforest::cli
