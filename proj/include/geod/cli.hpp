#pragma once

#include <string>
#include <vector>

namespace geod {

// Command-line entry point behind main(): `args` in natural order, program
// name excluded. Returns the process exit code: 0 success, 1 bad usage,
// 2 runtime failure. Each command echoes a JSON result object on stdout;
// logs go to stderr (level via GEOD_LOG).
int dispatch(std::vector<std::string> args);

}  // namespace geod
