#pragma once

#include <string>
#include <vector>

namespace ser::cli {

// Runs the full command line. Returns the process exit code:
// 0 success, 1 runtime failure, 2 usage/validation error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args without argv[0]

}  // namespace ser::cli
