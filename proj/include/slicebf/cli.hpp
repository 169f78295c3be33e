#pragma once

#include <iosfwd>

namespace slicebf {

/// Entry point of the command-line tool. Returns the process exit code:
/// 0 success, 2 input error, 3 statistical degeneracy, 4 capacity.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace slicebf
