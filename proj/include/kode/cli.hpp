#pragma once

#include <iosfwd>

namespace kode::cli {

/// Process exit codes.
enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 2,      ///< bad flags, configuration or parameter values
    exit_data = 3,       ///< unreadable or inconsistent input data, I/O failures
    exit_numerical = 4,  ///< divergence, conditioning or convergence failures
};

/// Entry point shared by the executable and the tests. Commands: simulate,
/// fit, infer, benchmark.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kode::cli
