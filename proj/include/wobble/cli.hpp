#pragma once

// Command-line front end. Lives in the library so tests can drive it in-process.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "wobble/balance.hpp"
#include "wobble/power.hpp"
#include "wobble/signal.hpp"

namespace wobble::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;          // I/O, parse or format problems
inline constexpr int kExitValidation = 2;  // infeasible configuration or failed verification

struct CliConfig {
  balance::BalanceConfig balance;
  power::PowerParams power;
  signal::GeneratorConfig generator;
  std::size_t fifo_capacity = 8;
};

/// Overlays a config document onto cfg. Sections: "balance", "power",
/// "generator", "simulation". Throws std::invalid_argument on unknown keys.
void apply_config(const nlohmann::json& j, CliConfig& cfg);
CliConfig load_config(const std::filesystem::path& path);

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wobble::cli
