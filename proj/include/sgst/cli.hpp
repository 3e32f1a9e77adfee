#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sgst {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNanLoss = 3;

// Runs `sgst <command> [flags]`; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sgst
