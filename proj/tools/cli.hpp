#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qtree::cli {

// Exit codes: 0 success, 1 usage, I/O or parse errors, 2 a mathematical
// precondition or check failed.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qtree::cli
