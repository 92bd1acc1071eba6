#pragma once

#include <ostream>

namespace viewfield::cli {

/// Runs one subcommand. Returns 0 on success, 1 for user errors (bad flags,
/// invalid input files) and 2 for internal failures.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace viewfield::cli
