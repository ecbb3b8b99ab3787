#ifndef SYMPTOMCAST_TOOLS_CLI_HPP
#define SYMPTOMCAST_TOOLS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace symptomcast::cli {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kConfig = 3,
    kData = 4,
    kNumeric = 5,
};

// Runs one invocation; args exclude the program name. Normal output goes to
// `out`, the single-line error (and warnings) to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace symptomcast::cli

#endif
