#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ordcore::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kBadInput = 2,
  kTrainingAborted = 3,
  kIo = 4,
  kOracleMismatch = 5,
};

// Arguments exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace ordcore::cli
