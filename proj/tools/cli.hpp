#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace factorkit::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;    // bad flags, unknown model, invalid spec, missing file
inline constexpr int kNumeric = 3;  // numeric failure at run time

// Entry point used by main() and the tests. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace factorkit::cli
