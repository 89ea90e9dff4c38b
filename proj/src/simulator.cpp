#include <algorithm>
#include <cmath>
#include <limits>

#include "wobble/pnet.hpp"

namespace wobble::pnet {

namespace {

using json = nlohmann::json;

constexpr std::int64_t kNsPerSecond = 1'000'000'000;
constexpr std::int64_t kNsPerMs = 1'000'000;
constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

struct SampleItem {
  signal::Sample sample;
};
struct SegmentItem {
  std::vector<signal::Sample> samples;
};
struct ResultItem {
  PacketKind kind = PacketKind::kBalanceResult;
  std::uint32_t t_ms = 0;
  std::uint8_t payload = 0;
  bool stopped = false;
};
using Item = std::variant<SampleItem, SegmentItem, ResultItem>;

struct Token {
  Item item;
  std::int64_t ready_ns = 0;  // producer finished
};

std::string edge_name(const Edge& e) {
  return std::string(task_name(e.from)) + "->" + std::string(task_name(e.to));
}

class Fifo {
 public:
  Fifo(Edge edge, std::size_t capacity, FifoStats* stats) : edge_(edge), capacity_(capacity), stats_(stats) {}

  void push(Token t) {
    if (queue_.size() >= capacity_) {
      throw SchedulerError("FIFO " + edge_name(edge_) + " overflowed its capacity of " + std::to_string(capacity_));
    }
    queue_.push_back(std::move(t));
    ++stats_->produced;
  }
  Token pop() {
    Token t = std::move(queue_.front());
    queue_.pop_front();
    ++stats_->consumed;
    return t;
  }
  std::uint64_t drain() {
    const std::uint64_t n = queue_.size();
    stats_->drained += n;
    queue_.clear();
    return n;
  }
  std::size_t size() const { return queue_.size(); }

 private:
  Edge edge_;
  std::size_t capacity_;
  FifoStats* stats_;
  std::deque<Token> queue_;
};

// Board tilt as seen by the sensor at any simulated time.
class MotionSource {
 public:
  MotionSource(const Scenario& sc, const signal::GeneratorConfig& gen) : recording_(sc.recording) {
    for (const MotionSegment& seg : sc.motion) {
      Segment s{std::llround(seg.t0_s * 1000.0), std::llround(seg.t1_s * 1000.0), {}};
      if (seg.cls) {
        signal::GeneratorConfig cfg = gen;
        cfg.seed = seg.seed;
        s.rec = signal::synthesize_motion(*seg.cls, seg.t1_s - seg.t0_s, cfg);
      }
      segments_.push_back(std::move(s));
    }
  }

  signal::Sample at(std::uint32_t t_ms) const {
    signal::Sample out{t_ms, 0, 0};
    if (recording_) {
      lookup(recording_->samples, t_ms, out);
      return out;
    }
    for (auto it = segments_.rbegin(); it != segments_.rend(); ++it) {
      if (t_ms >= it->t0_ms && t_ms < it->t1_ms) {
        lookup(it->rec.samples, static_cast<std::uint32_t>(t_ms - it->t0_ms), out);
        break;
      }
    }
    return out;
  }

 private:
  struct Segment {
    std::int64_t t0_ms;
    std::int64_t t1_ms;
    signal::Recording rec;  // empty for stillness
  };

  static void lookup(const std::vector<signal::Sample>& samples, std::uint32_t rel_ms, signal::Sample& out) {
    const std::size_t idx = rel_ms / signal::kSamplePeriodMs;
    if (idx < samples.size()) {
      out.x = samples[idx].x;
      out.y = samples[idx].y;
    }
  }

  std::optional<signal::Recording> recording_;
  std::vector<Segment> segments_;
};

class Simulator {
 public:
  Simulator(const Scenario& sc, const SimOptions& opt)
      : sc_(sc), opt_(opt), meter_(opt.power), motion_(sc, opt.generator) {
    opt_.power.validate();
    opt_.balance.validate();
  }

  SimResult run() {
    horizon_ns_ = std::llround(sc_.horizon_s * 1e9);
    state_ = initial_state(sc_.initial_mode, opt_.power, sc_.initial_frequency_mhz, opt_.fifo_capacity);
    enter_topology(0);

    std::size_t next_cmd = 0;
    std::int64_t next_tick = kNsPerSecond;
    while (true) {
      const std::int64_t t_cmd =
          next_cmd < sc_.commands.size() ? std::llround(sc_.commands[next_cmd].t_s * 1e9) : kNever;
      const std::int64_t t_tick = next_tick <= horizon_ns_ ? next_tick : kNever;
      const std::int64_t t_sample = next_sample_ns_ < horizon_ns_ ? next_sample_ns_ : kNever;
      const std::int64_t t = std::min({t_cmd, t_tick, t_sample});
      if (t == kNever) break;
      advance_to(t);
      if (t == t_cmd) {
        apply_command(sc_.commands[next_cmd++]);
      } else if (t == t_tick) {
        on_tick();
        next_tick += kNsPerSecond;
      } else {
        on_sample();
        next_sample_ns_ += state_.config.sample_period_ns;
      }
    }
    advance_to(horizon_ns_);
    check_load_all();

    for (auto& [edge, fifo] : fifos_) res_.fifo[edge].resident = fifo.size();
    res_.energy_uj = meter_.total_uj();
    for (std::size_t i = 0; i < kNumTasks; ++i) res_.task_energy_uj[i] = meter_.task_uj(static_cast<TaskKind>(i));
    res_.idle_energy_uj = meter_.idle_uj();
    res_.trace.add(horizon_ns_, "end",
                   {{"energy_uj", res_.energy_uj},
                    {"idle_energy_uj", res_.idle_energy_uj},
                    {"samples", res_.samples},
                    {"raw_packets", res_.raw_packets},
                    {"result_packets", res_.result_packets},
                    {"cnn_inferences", res_.cnn_inferences}});
    return std::move(res_);
  }

 private:
  void advance_to(std::int64_t t) {
    meter_.charge_idle(t - now_ns_, state_.config.frequency_mhz);
    now_ns_ = t;
  }

  std::uint32_t now_ms() const { return static_cast<std::uint32_t>(now_ns_ / kNsPerMs); }

  void enter_topology(std::int64_t t) {
    if (state_.mode == OperatingMode::kCnnProcessing && opt_.model == nullptr) {
      throw std::invalid_argument("CNN mode requires a weight file");
    }
    json drained = json::object();
    for (auto& [edge, fifo] : fifos_) {
      const auto n = fifo.drain();
      if (n) drained[edge_name(edge)] = n;
    }
    fifos_.clear();
    for (const Edge& e : state_.topology.edges) {
      fifos_.emplace(e, Fifo(e, state_.topology.fifo_capacity, &res_.fifo[e]));
    }
    second_buffer_.clear();
    cnn_window_.clear();
    last_balance_end_ = t;
    next_sample_ns_ = t;

    json tasks = json::array();
    for (TaskKind k : state_.topology.tasks) tasks.push_back(task_name(k));
    json edges = json::array();
    for (const Edge& e : state_.topology.edges) edges.push_back(edge_name(e));
    res_.trace.add(t, "reconfigure",
                   {{"mode", mode_name(state_.mode)},
                    {"frequency_mhz", state_.config.frequency_mhz},
                    {"sampling_hz", state_.config.sampling_hz()},
                    {"ble_batch", state_.config.ble_batch},
                    {"fifo_capacity", state_.topology.fifo_capacity},
                    {"tasks", std::move(tasks)},
                    {"edges", std::move(edges)},
                    {"drained", std::move(drained)}});
  }

  void apply_command(const AdamEvent& ev) {
    const auto& cmd = std::get<ExternalCommand>(ev.payload);
    json detail = {{"target", mode_name(cmd.target)}};
    if (cmd.frequency_mhz) detail["frequency_mhz"] = *cmd.frequency_mhz;
    res_.trace.add(now_ns_, "command", detail);

    const NodeState next = adam_apply(ev, state_, opt_.power);
    if (next == state_) return;
    const bool topology_changed = next.mode != state_.mode;
    state_ = next;
    if (topology_changed) {
      enter_topology(now_ns_);
    } else {
      res_.trace.add(now_ns_, "reconfigure",
                     {{"mode", mode_name(state_.mode)},
                      {"frequency_mhz", state_.config.frequency_mhz},
                      {"sampling_hz", state_.config.sampling_hz()},
                      {"ble_batch", state_.config.ble_batch},
                      {"fifo_capacity", state_.topology.fifo_capacity},
                      {"drained", json::object()}});
    }
  }

  // Runs one task invocation on the single simulated core; returns its end time.
  std::int64_t invoke(TaskKind task, std::int64_t release_ns) {
    const std::uint64_t cycles = opt_.power.task_cycles(task);
    const auto f = static_cast<std::uint64_t>(state_.config.frequency_mhz);
    const auto duration = static_cast<std::int64_t>((cycles * 1000 + f - 1) / f);
    const std::int64_t start = std::max({release_ns, cpu_free_ns_, now_ns_});
    const std::int64_t end = start + duration;
    cpu_free_ns_ = end;
    meter_.charge_task(task);
    requested_ns_[now_ns_ / kNsPerSecond] += duration;
    if (opt_.record_tasks) {
      res_.trace.add(start, "task_start", {{"task", task_name(task)}, {"cycles", cycles}});
      res_.trace.add(end, "task_end", {{"task", task_name(task)}});
    }
    return end;
  }

  Fifo& output_fifo(TaskKind t) { return fifos_.at(*state_.topology.output_of(t)); }

  void on_sample() {
    const signal::Sample s = motion_.at(now_ms());
    ++res_.samples;
    const std::int64_t end = invoke(TaskKind::kGetData, now_ns_);
    output_fifo(TaskKind::kGetData).push({SampleItem{s}, end});
    cascade();
  }

  void on_tick() {
    if (state_.topology.has_task(TaskKind::kBalance) && !second_buffer_.empty()) flush_balance();
    cascade();
    check_load(now_ns_ / kNsPerSecond - 1);
    if (cpu_free_ns_ - now_ns_ > kNsPerSecond) {
      throw SchedulerError("processing backlog exceeds one second at t=" + std::to_string(now_ns_ / kNsPerSecond) + " s");
    }
    res_.trace.add(now_ns_, "tick",
                   {{"energy_uj", meter_.total_uj()},
                    {"mode", mode_name(state_.mode)},
                    {"load", load_of(now_ns_ / kNsPerSecond - 1)}});
  }

  void flush_balance() {
    const std::int64_t ready = std::max(now_ns_, last_balance_end_);
    if (state_.mode == OperatingMode::kBasicBalance) {
      const int pct = balance::balance_percent(second_buffer_, opt_.balance);
      output_fifo(TaskKind::kBalance)
          .push({ResultItem{PacketKind::kBalanceResult, now_ms(), static_cast<std::uint8_t>(pct), false}, ready});
    } else {
      const bool stopped = second_buffer_.size() >= 2 && balance::detect_stop(second_buffer_, opt_.balance);
      state_ = adam_apply({now_ns_ * 1e-9, WorkloadSignal{stopped}}, state_, opt_.power);
      res_.trace.add(now_ns_, "workload", {{"stopped", stopped}});
      output_fifo(TaskKind::kBalance).push({SegmentItem{second_buffer_}, ready});
    }
    second_buffer_.clear();
  }

  void cascade() {
    bool fired = true;
    while (fired) {
      fired = false;
      for (TaskKind t : state_.topology.tasks) {
        if (t != TaskKind::kGetData && try_fire(t)) {
          fired = true;
          break;
        }
      }
    }
  }

  bool try_fire(TaskKind task) {
    Fifo& in = fifos_.at(*state_.topology.input_of(task));
    const bool raw_send = task == TaskKind::kSend && state_.mode == OperatingMode::kRawData;
    const std::size_t need = raw_send ? static_cast<std::size_t>(state_.config.ble_batch) : 1;
    if (in.size() < need) return false;

    std::vector<Token> tokens;
    std::int64_t release = now_ns_;
    for (std::size_t i = 0; i < need; ++i) {
      tokens.push_back(in.pop());
      release = std::max(release, tokens.back().ready_ns);
    }

    switch (task) {
      case TaskKind::kBalance: {
        last_balance_end_ = invoke(task, release);
        second_buffer_.push_back(std::get<SampleItem>(tokens[0].item).sample);
        break;
      }
      case TaskKind::kCnn:
        run_cnn(std::get<SegmentItem>(tokens[0].item), release);
        break;
      case TaskKind::kThreshold: {
        const auto& r = std::get<ResultItem>(tokens[0].item);
        const std::int64_t end = invoke(task, release);
        if (r.stopped) {
          res_.trace.add(end, "dropped", {{"reason", "stopped"}});
        } else {
          output_fifo(task).push({r, end});
        }
        break;
      }
      case TaskKind::kSend: {
        const std::int64_t end = invoke(task, release);
        BlePacket pkt;
        if (raw_send) {
          std::vector<signal::Sample> samples;
          for (const Token& t : tokens) samples.push_back(std::get<SampleItem>(t.item).sample);
          pkt = pack_raw(samples, samples.front().t_ms);
          ++res_.raw_packets;
        } else {
          const auto& r = std::get<ResultItem>(tokens[0].item);
          pkt = pack_result(r.kind, r.t_ms, r.payload);
          ++res_.result_packets;
        }
        res_.trace.add(end, "packet",
                       {{"mode", mode_name(state_.mode)},
                        {"type", pkt.kind == PacketKind::kRaw ? "raw"
                                 : pkt.kind == PacketKind::kBalanceResult ? "balance"
                                                                          : "cnn"},
                        {"bytes", pkt.bytes.size()},
                        {"hex", to_hex(pkt.bytes)}});
        break;
      }
      case TaskKind::kGetData:
        break;
    }
    return true;
  }

  void run_cnn(const SegmentItem& seg, std::int64_t release) {
    for (const auto& s : seg.samples) {
      cnn_window_.push_back(s);
      if (cnn_window_.size() > signal::kWindowSamples) cnn_window_.pop_front();
    }
    if (cnn_window_.size() < signal::kWindowSamples) return;
    if (state_.cnn_suppressed) {
      ++res_.cnn_skipped;
      res_.trace.add(release, "cnn_skipped", {{"reason", "stopped"}});
      output_fifo(TaskKind::kCnn).push({ResultItem{PacketKind::kCnnResult, now_ms(), 0, true}, release});
      return;
    }
    std::vector<std::int16_t> xs;
    std::vector<std::int16_t> ys;
    xs.reserve(signal::kWindowSamples);
    ys.reserve(signal::kWindowSamples);
    for (const auto& s : cnn_window_) {
      xs.push_back(s.x);
      ys.push_back(s.y);
    }
    const model::Inference inf = model::infer_window(*opt_.model, model::quantize_window(*opt_.model, xs, ys));
    const std::int64_t end = invoke(TaskKind::kCnn, release);
    ++res_.cnn_inferences;
    res_.cnn_times_ns.push_back(now_ns_);
    res_.trace.add(end, "inference", {{"class", class_label(inf.cls)}, {"code", class_code(inf.cls)}});
    output_fifo(TaskKind::kCnn)
        .push({ResultItem{PacketKind::kCnnResult, now_ms(), class_code(inf.cls), false}, end});
  }

  double load_of(std::int64_t second) const {
    const auto it = requested_ns_.find(second);
    return it == requested_ns_.end() ? 0.0 : static_cast<double>(it->second) / kNsPerSecond;
  }

  void check_load(std::int64_t second) {
    const double load = load_of(second);
    res_.max_second_load = std::max(res_.max_second_load, load);
    if (load > 1.0) {
      throw SchedulerError("cycle demand in second " + std::to_string(second) + " exceeds the clock (" +
                           std::to_string(load * 100.0) + "% load)");
    }
  }

  void check_load_all() {
    for (const auto& [second, ns] : requested_ns_) check_load(second);
  }

  const Scenario& sc_;
  SimOptions opt_;
  power::EnergyMeter meter_;
  MotionSource motion_;
  NodeState state_;
  SimResult res_;
  std::map<Edge, Fifo> fifos_;

  std::int64_t horizon_ns_ = 0;
  std::int64_t now_ns_ = 0;
  std::int64_t next_sample_ns_ = 0;
  std::int64_t cpu_free_ns_ = 0;
  std::int64_t last_balance_end_ = 0;
  std::map<std::int64_t, std::int64_t> requested_ns_;  // cycle time requested per simulated second

  std::vector<signal::Sample> second_buffer_;
  std::deque<signal::Sample> cnn_window_;
};

}  // namespace

SimResult run_scenario(const Scenario& scenario, const SimOptions& options) {
  return Simulator(scenario, options).run();
}

}  // namespace wobble::pnet
