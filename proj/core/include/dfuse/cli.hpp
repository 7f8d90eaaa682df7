#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace dfuse {

// Exit codes: 0 success, 1 usage error, 2 runtime or validation failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

// args excludes the program name: {"fuse", "--alpha", "0.4", ...}.
int cli_dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err);
int cli_dispatch(std::span<const std::string> args);

std::string cli_usage();

}  // namespace dfuse
