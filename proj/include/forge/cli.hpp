#pragma once

#include <string>
#include <vector>

namespace forge {

/// Entry point behind the `forge` binary; exposed so tests can invoke
/// subcommands in-process. Returns the process exit code: 0 success,
/// 2 usage/configuration error, 1 runtime failure.
int run_cli(std::vector<std::string> args);

}  // namespace forge
