#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kmpc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `kmpc` tool. Subcommands: identify, predict, run, sweep.
int run_cli(const std::vector<std::string> & args, std::ostream & out, std::ostream & err);

}  // namespace kmpc
