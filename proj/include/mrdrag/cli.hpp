#pragma once

#include <iostream>

namespace mrdrag {

/// The mrdrag command line. Returns the process exit code: 0 on success,
/// 1 on a runtime error (diagnostic on `err`), 2 on a usage error.
///
///   corpus validate|stats|fixture
///   index build|search
///   chat
///   simulate
///   evaluate retrieval|judge|ablate|pairwise
///   serve
int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr,
                 std::istream& in = std::cin);

}  // namespace mrdrag
