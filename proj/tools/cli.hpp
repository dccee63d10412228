#pragma once

#include <string>
#include <vector>

namespace adiff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1; // runtime or verification failure
inline constexpr int kExitUsage = 2;

int run(int argc, char** argv);

// Arguments without the program name, e.g. {"sample", "--n", "4"}.
int run(const std::vector<std::string>& args);

} // namespace adiff::cli
