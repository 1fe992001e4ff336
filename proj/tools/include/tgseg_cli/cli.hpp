#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tgseg::cli {

/// Runs one command line. Failures print "error: <code>: <message>" on `err`
/// and return a nonzero exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tgseg::cli
