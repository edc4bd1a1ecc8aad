#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spermflow::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

// Runs one invocation; args[0] is the program name. Exceptions are mapped
// to exit codes and reported on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spermflow::cli
