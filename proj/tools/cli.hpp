#pragma once

#include <string>
#include <vector>

namespace asfnet::cli {

/// Runs one CLI invocation. Exit codes: 0 success, 1 usage error, 2
/// data/format error, 3 numeric failure.
int run(int argc, const char* const* argv);

/// Convenience for tests: args exclude the program name.
int run(const std::vector<std::string>& args);

}  // namespace asfnet::cli
