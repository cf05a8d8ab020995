#pragma once

namespace path {

// Full command surface of the `path` binary; returns the process exit code
// (0 = success, 1 = runtime failure, 2 = usage or configuration error).
int run_cli(int argc, const char* const* argv);

}  // namespace path
