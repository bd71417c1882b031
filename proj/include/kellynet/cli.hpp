#pragma once

#include <string>
#include <vector>

namespace kellynet::cli {

inline constexpr const char* kToolName = "kellynet";
inline constexpr const char* kToolVersion = "0.1.0";

// Stable exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitInstability = 2;
inline constexpr int kExitParse = 3;
inline constexpr int kExitValidation = 4;
inline constexpr int kExitReducibleChain = 5;
inline constexpr int kExitStateSpaceCap = 6;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitInternal = 70;

/// Runs one invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args);

int run(int argc, char** argv);

}  // namespace kellynet::cli
