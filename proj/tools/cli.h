#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fednewsrec::cli {

// Runs one command line (args excludes the program name). Returns the exit
// status; normal output goes to out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fednewsrec::cli
