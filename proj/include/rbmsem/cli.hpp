#pragma once

#include <iosfwd>

namespace rbmsem {

/// Entry point of the `rbmsem` tool. Subcommands: fit, simulate, grid, report.
/// Exit codes: 0 success (acceptable fit), 2 fit ran but was rejected, 1 error.
/// Machine-readable output goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rbmsem
