#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fluxcal::cli {

/// Exit codes: 0 ok, 1 usage or I/O, 2 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

/// Runs `fluxcal <args...>` (args exclude the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fluxcal::cli
