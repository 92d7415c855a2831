#pragma once

namespace crossloc {

/// Exit codes: 0 ok, 1 check failure, 2 usage, 3 divergence, 4 IO/parse.
enum ExitCode { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitDiverged = 3, kExitIo = 4 };

int run_cli(int argc, char** argv);

}  // namespace crossloc
