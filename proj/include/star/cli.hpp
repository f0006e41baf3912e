#pragma once

#include <iosfwd>

namespace star {

/// Entry point of the `star` command line tool (fit, predict, diagnose, test,
/// select, simulate). Returns 0 on success, 1 on usage or data errors and 2
/// when EM does not converge.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace star
