#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace survlda::cli {

// args excludes the program name. Exit codes: 0 success, 1 usage or
// validation error, 2 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace survlda::cli
