#pragma once

#include <iosfwd>

namespace permkron::cli {

// Entry point behind main(); streams are injectable so tests can run
// subcommands in-process. Exit codes: 0 success, 1 I/O, 2 validation,
// 3 numerical or training failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace permkron::cli
