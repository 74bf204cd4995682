#pragma once

#include <iosfwd>

namespace pt2i {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitParseFailure = 2;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitUnavailable = 69;  // could not bind the listen address
inline constexpr int kExitConfig = 78;

/// Entry point of the pt2i command; main() forwards to it.
int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace pt2i
