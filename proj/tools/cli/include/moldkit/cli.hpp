#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace moldkit::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kNumeric = 3,
};

// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Closest candidate by edit distance, or "" when nothing is within reach.
std::string suggest(const std::string& word, const std::vector<std::string>& candidates);

}  // namespace moldkit::cli
