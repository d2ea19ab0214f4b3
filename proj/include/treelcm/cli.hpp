#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace treelcm {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitRuntime = 4;

// Entry point of `treelcm simulate|fit|summarize|report`. Errors go to `err`
// as "error[<code>]: <message>".
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace treelcm
