#ifndef UNROLL_TOOLS_COMMANDS_HPP
#define UNROLL_TOOLS_COMMANDS_HPP

#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace cli {

// Exit codes
inline constexpr int kOk = 0;
inline constexpr int kFailed = 1;     // check failed
inline constexpr int kUsage = 2;      // bad input, config or output directory
inline constexpr int kDiverged = 3;   // training produced a non-finite loss

struct Paths {
  std::string out;
  std::string data;        // dataset root (train/ and test/ inside) or one sample set
  std::string checkpoint;  // reconstruct input, train resume source
  std::string recon;       // evaluate input
  bool force = false;
};

int cmd_simulate(const Config& cfg, const Paths& paths);
int cmd_train(Config cfg, const Paths& paths, bool resume);
int cmd_reconstruct(Config cfg, const Paths& paths, bool binarize, bool pgm);
int cmd_evaluate(const Config& cfg, const Paths& paths);
int cmd_checkgrad(const Config& cfg, const Paths& paths);

}  // namespace cli

#endif  // UNROLL_TOOLS_COMMANDS_HPP
