#pragma once

// Command-line front end: simulate, fit, predict, select-semimetric, bench.
//
// Exit codes: 0 success, 1 runtime or model failure, 2 usage error.

#include <ostream>
#include <string>
#include <vector>

namespace fplm::cli {

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace fplm::cli
