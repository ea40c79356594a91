#pragma once

#include <iosfwd>

namespace alertsieve {

/// Command-line entry point. Returns 0 on success, 2 on a usage error and 1
/// on any other failure, after writing {"error":<code>,"message":...} to
/// `err`.
int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out,
            std::ostream& err);

}  // namespace alertsieve
