#pragma once

namespace rnflow {

/// Full command-line entry point. Returns the process exit code:
///   0 success, 2 config/parse error, 3 numeric abort, 4 missing artifact,
///   5 contract violation, 1 anything else.
int run_cli(int argc, char** argv);

}  // namespace rnflow
