#pragma once

#include <iosfwd>

namespace foct {

/// Entry point of the `foct` tool. Returns 0 on success, 1 when a pipeline
/// step fails and 2 on a usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace foct
