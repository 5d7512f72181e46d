#pragma once

#include <iosfwd>
#include <string>

namespace rigid_accum::cli {

enum ExitCode : int {
    kOk = 0,
    kInputError = 2,
    kPipelineError = 3,
    kEvalMismatch = 4,
};

/// Entry point shared by the executable and the tests. argv[0] is the
/// program name.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Hex SHA-1 of a git blob object holding `bytes`.
std::string git_blob_sha1(const std::string& bytes);

}  // namespace rigid_accum::cli
