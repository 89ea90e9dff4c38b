#pragma once

// Process-network runtime: task topologies per operating mode, the adaptive
// runtime manager (ADAM), BLE packet layout and a deterministic
// discrete-event simulator of the sensor node.

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "wobble/balance.hpp"
#include "wobble/mode.hpp"
#include "wobble/model.hpp"
#include "wobble/power.hpp"
#include "wobble/signal.hpp"
#include "wobble/trace.hpp"

namespace wobble::pnet {

// ---------------------------------------------------------------------------
// Topology

struct Edge {
  TaskKind from = TaskKind::kGetData;
  TaskKind to = TaskKind::kSend;
  auto operator<=>(const Edge&) const = default;
};

struct ProcessTopology {
  std::vector<TaskKind> tasks;  // in priority order
  std::vector<Edge> edges;
  std::size_t fifo_capacity = 8;

  bool has_task(TaskKind t) const;
  /// The single edge feeding t, if any.
  std::optional<Edge> input_of(TaskKind t) const;
  std::optional<Edge> output_of(TaskKind t) const;

  bool operator==(const ProcessTopology&) const = default;
};

/// Raw: GetData->Send. Balance: GetData->Balance->Threshold->Send.
/// CNN: GetData->Balance->CNN->Threshold->Send.
ProcessTopology build_topology(OperatingMode mode, std::size_t fifo_capacity = 8);

/// Throws std::invalid_argument unless edges join active tasks, the graph is
/// acyclic and it matches one of the three mode shapes.
OperatingMode identify_mode(const ProcessTopology& t);

// ---------------------------------------------------------------------------
// Node configuration and ADAM

struct NodeConfig {
  int frequency_mhz = 8;
  std::int64_t sample_period_ns = 10'000'000;  // 100 Hz
  int ble_batch = 1;
  double result_period_s = 1.0;

  double sampling_hz() const { return 1e9 / static_cast<double>(sample_period_ns); }
  bool operator==(const NodeConfig&) const = default;
};

struct NodeState {
  OperatingMode mode = OperatingMode::kRawData;
  ProcessTopology topology;
  NodeConfig config;
  bool cnn_suppressed = false;

  bool operator==(const NodeState&) const = default;
};

struct ExternalCommand {
  OperatingMode target = OperatingMode::kRawData;
  std::optional<int> frequency_mhz;  // overrides the mode's minimum feasible frequency
};

struct WorkloadSignal {
  bool stopped = false;
};

struct AdamEvent {
  double t_s = 0.0;
  std::variant<ExternalCommand, WorkloadSignal> payload;
};

/// Default configuration for a mode: raw at 100 Hz with 4-sample packets,
/// processed modes at 100/7 Hz, each at its minimum feasible frequency.
NodeConfig default_config(OperatingMode mode, const power::PowerParams& p);

/// Throws power::FeasibilityError / std::out_of_range for an unusable frequency.
NodeState initial_state(OperatingMode mode, const power::PowerParams& p,
                        std::optional<int> frequency_mhz = std::nullopt, std::size_t fifo_capacity = 8);

/// External commands swap topology and configuration (a command for the
/// current mode and frequency is a no-op); workload signals toggle CNN
/// suppression while in CNN mode. Throws std::invalid_argument for an unknown
/// mode and power::FeasibilityError for an infeasible frequency.
NodeState adam_apply(const AdamEvent& event, const NodeState& state, const power::PowerParams& p);

// ---------------------------------------------------------------------------
// BLE packets

inline constexpr std::size_t kRawPacketBytes = 20;
inline constexpr std::size_t kResultPacketBytes = 6;

enum class PacketKind : std::uint8_t { kBalanceResult = 0, kCnnResult = 1, kRaw = 2 };

struct BlePacket {
  PacketKind kind = PacketKind::kRaw;
  std::vector<std::uint8_t> bytes;
};

/// u32 timestamp + 4 x (i16 x, i16 y), little-endian. Throws std::invalid_argument unless 4 samples.
BlePacket pack_raw(std::span<const signal::Sample> samples, std::uint32_t t0_ms);

/// u8 kind + u32 timestamp + u8 payload (percent or class code).
BlePacket pack_result(PacketKind kind, std::uint32_t t_ms, std::uint8_t payload);

std::string to_hex(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Scenarios

struct MotionSegment {
  double t0_s = 0.0;
  double t1_s = 0.0;
  std::optional<ExerciseClass> cls;  // empty: board held still
  std::uint64_t seed = 0;
};

struct Scenario {
  double horizon_s = 60.0;
  OperatingMode initial_mode = OperatingMode::kBasicBalance;
  std::optional<int> initial_frequency_mhz;
  std::vector<AdamEvent> commands;      // external commands only, ordered by time
  std::vector<MotionSegment> motion;    // later segments win where they overlap
  std::optional<signal::Recording> recording;  // used instead of segments when present
};

/// JSON scenario:
/// {"horizon_s": 60, "initial_mode": "balance", "initial_frequency_mhz": 2,
///  "events": [{"t_s": 5, "command": "cnn", "frequency_mhz": 4},
///             {"t_s": 30, "motion": {"class": "R", "seed": 3}}],
///  "motion": [{"t0": 0, "t1": 30, "class": "R", "seed": 1}] | "recording.csv"}
/// A "still" class means no motion. Throws std::invalid_argument on malformed
/// or unordered input and on events beyond the horizon.
Scenario parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Simulation

class SchedulerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FifoStats {
  std::uint64_t produced = 0;
  std::uint64_t consumed = 0;
  std::uint64_t drained = 0;
  std::uint64_t resident = 0;
};

struct SimOptions {
  power::PowerParams power;
  balance::BalanceConfig balance;
  signal::GeneratorConfig generator;
  std::size_t fifo_capacity = 8;
  const model::ModelSpec* model = nullptr;  // required iff CNN mode is entered
  bool record_tasks = true;                  // task_start / task_end records
};

struct SimResult {
  Trace trace;
  std::map<Edge, FifoStats> fifo;  // accumulated over every topology used
  std::uint64_t samples = 0;
  std::uint64_t raw_packets = 0;
  std::uint64_t result_packets = 0;
  std::uint64_t cnn_inferences = 0;
  std::uint64_t cnn_skipped = 0;
  std::vector<std::int64_t> cnn_times_ns;
  double energy_uj = 0.0;
  std::array<double, kNumTasks> task_energy_uj{};
  double idle_energy_uj = 0.0;
  double max_second_load = 0.0;  // busiest simulated second, as a fraction of the clock
};

/// Runs the scenario to its horizon. Throws power::FeasibilityError for
/// configurations the clock cannot sustain, SchedulerError on FIFO overflow or
/// cycle overrun, std::invalid_argument when CNN mode is entered without a model.
SimResult run_scenario(const Scenario& scenario, const SimOptions& options);

}  // namespace wobble::pnet
