#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace smsat::cli {

/// Runs one command line (args[0] is the program name). Returns 0 on success,
/// 1 on a domain error and 2 on a usage error. Results go to `out`, log lines
/// and error messages to `log`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log);

}  // namespace smsat::cli
