#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace convkit::cli {

/// Runs one subcommand. `args` excludes the program name.
/// Returns 0 on success, 1 when a module reports an error and 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace convkit::cli
