#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cisfa::cli {

/// Runs one `cisfa` invocation. `args` excludes the program name.
/// Returns the process exit code: 0 success, 2 usage, 3 data/IO, 4 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cisfa::cli
