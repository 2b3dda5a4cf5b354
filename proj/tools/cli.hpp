#pragma once

#include <string>
#include <vector>

namespace dsft::cli {

/// Runs one command line (without the program name) and returns the process exit code:
/// 0 success, 1 internal error, 2 usage or input error, 3 failed self-check, 4 integrity mismatch.
int run(const std::vector<std::string>& args);

}  // namespace dsft::cli
