#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "wobble/pnet.hpp"

namespace wobble::pnet {

bool ProcessTopology::has_task(TaskKind t) const {
  return std::find(tasks.begin(), tasks.end(), t) != tasks.end();
}

std::optional<Edge> ProcessTopology::input_of(TaskKind t) const {
  for (const Edge& e : edges) {
    if (e.to == t) return e;
  }
  return std::nullopt;
}

std::optional<Edge> ProcessTopology::output_of(TaskKind t) const {
  for (const Edge& e : edges) {
    if (e.from == t) return e;
  }
  return std::nullopt;
}

ProcessTopology build_topology(OperatingMode mode, std::size_t fifo_capacity) {
  using enum TaskKind;
  ProcessTopology t;
  t.fifo_capacity = fifo_capacity;
  switch (mode) {
    case OperatingMode::kRawData:
      t.tasks = {kGetData, kSend};
      break;
    case OperatingMode::kBasicBalance:
      t.tasks = {kGetData, kBalance, kThreshold, kSend};
      break;
    case OperatingMode::kCnnProcessing:
      t.tasks = {kGetData, kBalance, kCnn, kThreshold, kSend};
      break;
    default:
      throw std::invalid_argument("unknown operating mode");
  }
  for (std::size_t i = 0; i + 1 < t.tasks.size(); ++i) t.edges.push_back({t.tasks[i], t.tasks[i + 1]});
  return t;
}

OperatingMode identify_mode(const ProcessTopology& t) {
  for (const Edge& e : t.edges) {
    if (!t.has_task(e.from) || !t.has_task(e.to)) {
      throw std::invalid_argument("edge " + std::string(task_name(e.from)) + "->" + std::string(task_name(e.to)) +
                                  " joins an inactive task");
    }
  }
  // Kahn's algorithm: every task must be removable for the graph to be acyclic.
  std::map<TaskKind, int> indegree;
  for (TaskKind k : t.tasks) indegree[k] = 0;
  for (const Edge& e : t.edges) ++indegree[e.to];
  std::vector<TaskKind> ready;
  for (const auto& [k, d] : indegree) {
    if (d == 0) ready.push_back(k);
  }
  std::size_t removed = 0;
  while (!ready.empty()) {
    const TaskKind k = ready.back();
    ready.pop_back();
    ++removed;
    for (const Edge& e : t.edges) {
      if (e.from == k && --indegree[e.to] == 0) ready.push_back(e.to);
    }
  }
  if (removed != indegree.size()) throw std::invalid_argument("topology contains a cycle");

  const std::set<TaskKind> tasks(t.tasks.begin(), t.tasks.end());
  const std::set<Edge> edges(t.edges.begin(), t.edges.end());
  for (OperatingMode m : {OperatingMode::kRawData, OperatingMode::kBasicBalance, OperatingMode::kCnnProcessing}) {
    const ProcessTopology ref = build_topology(m);
    if (tasks == std::set<TaskKind>(ref.tasks.begin(), ref.tasks.end()) &&
        edges == std::set<Edge>(ref.edges.begin(), ref.edges.end())) {
      return m;
    }
  }
  throw std::invalid_argument("topology matches no operating mode");
}

NodeConfig default_config(OperatingMode mode, const power::PowerParams& p) {
  NodeConfig c;
  c.frequency_mhz = power::min_feasible_frequency(mode, p);
  c.sample_period_ns = std::llround(1e9 / p.sampling_hz(mode));
  c.ble_batch = mode == OperatingMode::kRawData ? p.raw_batch : 1;
  c.result_period_s = 1.0;
  return c;
}

namespace {

NodeState configure(OperatingMode mode, std::optional<int> frequency_mhz, const power::PowerParams& p,
                    std::size_t fifo_capacity) {
  if (static_cast<std::size_t>(mode) >= kNumModes) throw std::invalid_argument("unknown operating mode");
  NodeState s;
  s.mode = mode;
  s.topology = build_topology(mode, fifo_capacity);
  s.config = default_config(mode, p);
  if (frequency_mhz) {
    power::check_feasible(mode, *frequency_mhz, p);
    s.config.frequency_mhz = *frequency_mhz;
  }
  return s;
}

}  // namespace

NodeState initial_state(OperatingMode mode, const power::PowerParams& p, std::optional<int> frequency_mhz,
                        std::size_t fifo_capacity) {
  return configure(mode, frequency_mhz, p, fifo_capacity);
}

NodeState adam_apply(const AdamEvent& event, const NodeState& state, const power::PowerParams& p) {
  if (const auto* cmd = std::get_if<ExternalCommand>(&event.payload)) {
    if (static_cast<std::size_t>(cmd->target) >= kNumModes) throw std::invalid_argument("unknown operating mode");
    const int f = cmd->frequency_mhz.value_or(power::min_feasible_frequency(cmd->target, p));
    if (cmd->target == state.mode && f == state.config.frequency_mhz) return state;
    return configure(cmd->target, f, p, state.topology.fifo_capacity);
  }
  const auto& signal = std::get<WorkloadSignal>(event.payload);
  NodeState next = state;
  if (state.mode == OperatingMode::kCnnProcessing) next.cnn_suppressed = signal.stopped;
  return next;
}

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(u & 0xffu));
    u = static_cast<U>(u >> 8);
  }
}

}  // namespace

BlePacket pack_raw(std::span<const signal::Sample> samples, std::uint32_t t0_ms) {
  if (samples.size() != 4) {
    throw std::invalid_argument("raw packet needs exactly 4 samples, got " + std::to_string(samples.size()));
  }
  BlePacket pkt{PacketKind::kRaw, {}};
  pkt.bytes.reserve(kRawPacketBytes);
  put_le(pkt.bytes, t0_ms);
  for (const auto& s : samples) {
    put_le(pkt.bytes, s.x);
    put_le(pkt.bytes, s.y);
  }
  return pkt;
}

BlePacket pack_result(PacketKind kind, std::uint32_t t_ms, std::uint8_t payload) {
  if (kind == PacketKind::kRaw) throw std::invalid_argument("pack_result: raw is not a result kind");
  BlePacket pkt{kind, {}};
  pkt.bytes.reserve(kResultPacketBytes);
  pkt.bytes.push_back(static_cast<std::uint8_t>(kind));
  put_le(pkt.bytes, t_ms);
  pkt.bytes.push_back(payload);
  return pkt;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

}  // namespace wobble::pnet
