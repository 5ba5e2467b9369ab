#pragma once

#include <iosfwd>

namespace transmod {

/// Exit codes: 0 success, 1 input error, 2 numerical failure or non-convergence.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace transmod
