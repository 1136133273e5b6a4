#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace evcnn::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitWeights = 3;
inline constexpr int kExitStream = 4;

/// Runs `evcnn <args...>`; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace evcnn::cli
