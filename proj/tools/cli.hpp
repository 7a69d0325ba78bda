#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace sflab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one `sflab <subcommand> ...` invocation. argv[0] is the program
/// name. Reports go to --out; progress and errors go to `err`.
int cli_dispatch(std::span<const std::string> argv, std::ostream& out, std::ostream& err);

}  // namespace sflab
