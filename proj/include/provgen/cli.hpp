#pragma once

#include <string>
#include <vector>

namespace provgen::cli {

// Entry point behind the provgen binary; also invoked in-process by tests.
// Exit codes: 0 success, 1 data/validation error, 2 usage error.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace provgen::cli
