#pragma once

namespace primfit {

/// Entry point of the `primfit` tool. Exit codes: 0 success, 1 usage error,
/// 2 invalid data, 3 numerical abort.
int cli_main(int argc, char** argv);

}  // namespace primfit
