#include "wobble/power.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace wobble::power {

namespace {

constexpr double kTickToleranceS = 1e-6;

}  // namespace

void PowerParams::validate() const {
  const double energies[] = {e_get_uj, e_get_balance_uj, e_cnn_uj, e_threshold_uj, e_send_uj};
  for (double e : energies) {
    if (!(e > 0.0)) throw std::invalid_argument("task energies must be positive");
  }
  if (e_get_balance_uj < e_get_uj) throw std::invalid_argument("E_gb must include E_g");
  const std::uint64_t cycles[] = {cycles_get, cycles_balance, cycles_cnn, cycles_threshold, cycles_send};
  for (auto c : cycles) {
    if (c == 0) throw std::invalid_argument("task cycle counts must be positive");
  }
  if (idle_mw.empty()) throw std::invalid_argument("idle power table is empty");
  for (const auto& [f, mw] : idle_mw) {
    if (f <= 0 || !(mw > 0.0)) throw std::invalid_argument("idle power table entries must be positive");
  }
  if (raw_batch < 1) throw std::invalid_argument("raw batch must be >= 1");
  if (!(raw_sampling_hz > 0.0 && processed_sampling_hz > 0.0 && balance_result_hz > 0.0 && cnn_result_hz > 0.0)) {
    throw std::invalid_argument("rates must be positive");
  }
}

double PowerParams::idle_power_mw(int frequency_mhz) const {
  const auto it = idle_mw.find(frequency_mhz);
  if (it == idle_mw.end()) {
    throw std::out_of_range("no idle power figure for " + std::to_string(frequency_mhz) + " MHz");
  }
  return it->second;
}

double PowerParams::task_energy_uj(TaskKind t) const {
  switch (t) {
    case TaskKind::kGetData: return e_get_uj;
    case TaskKind::kBalance: return e_get_balance_uj - e_get_uj;
    case TaskKind::kCnn: return e_cnn_uj;
    case TaskKind::kThreshold: return e_threshold_uj;
    case TaskKind::kSend: return e_send_uj;
  }
  throw std::invalid_argument("unknown task");
}

std::uint64_t PowerParams::task_cycles(TaskKind t) const {
  switch (t) {
    case TaskKind::kGetData: return cycles_get;
    case TaskKind::kBalance: return cycles_balance;
    case TaskKind::kCnn: return cycles_cnn;
    case TaskKind::kThreshold: return cycles_threshold;
    case TaskKind::kSend: return cycles_send;
  }
  throw std::invalid_argument("unknown task");
}

double PowerParams::sampling_hz(OperatingMode m) const {
  return m == OperatingMode::kRawData ? raw_sampling_hz : processed_sampling_hz;
}

double cycle_demand(OperatingMode mode, const PowerParams& p) {
  const double fs = p.sampling_hz(mode);
  const auto gb = static_cast<double>(p.cycles_get + p.cycles_balance);
  const auto ts = static_cast<double>(p.cycles_threshold + p.cycles_send);
  switch (mode) {
    case OperatingMode::kRawData:
      return static_cast<double>(p.cycles_get) * fs + static_cast<double>(p.cycles_send) * fs / p.raw_batch;
    case OperatingMode::kBasicBalance:
      return gb * fs + ts * p.balance_result_hz;
    case OperatingMode::kCnnProcessing:
      return gb * fs + (static_cast<double>(p.cycles_cnn) + ts) * p.cnn_result_hz;
  }
  throw std::invalid_argument("unknown operating mode");
}

void check_feasible(OperatingMode mode, int frequency_mhz, const PowerParams& p) {
  p.idle_power_mw(frequency_mhz);  // unknown frequencies are rejected first
  if (mode == OperatingMode::kRawData && frequency_mhz < p.raw_min_frequency_mhz) {
    throw FeasibilityError("raw mode needs at least " + std::to_string(p.raw_min_frequency_mhz) +
                           " MHz for BLE streaming, got " + std::to_string(frequency_mhz) + " MHz");
  }
  const double demand = cycle_demand(mode, p);
  if (demand > frequency_mhz * 1e6) {
    std::ostringstream msg;
    msg << std::string(mode_name(mode)) << " mode demands " << static_cast<std::uint64_t>(std::ceil(demand))
        << " cycles/s, more than " << frequency_mhz << " MHz provides";
    throw FeasibilityError(msg.str());
  }
}

int min_feasible_frequency(OperatingMode mode, const PowerParams& p) {
  for (const auto& [f, mw] : p.idle_mw) {
    if (mode == OperatingMode::kRawData && f < p.raw_min_frequency_mhz) continue;
    if (cycle_demand(mode, p) <= f * 1e6) return f;
  }
  throw FeasibilityError("no tabulated frequency satisfies " + std::string(mode_name(mode)) + " mode");
}

double execution_time_us(std::uint64_t cycles, int frequency_mhz) {
  if (frequency_mhz <= 0) throw std::invalid_argument("frequency must be positive");
  return static_cast<double>(cycles) / frequency_mhz;
}

PowerReport om_power(OperatingMode mode, const PowerParams& p, std::optional<int> frequency_mhz) {
  p.validate();
  const int f = frequency_mhz ? *frequency_mhz : min_feasible_frequency(mode, p);
  check_feasible(mode, f, p);

  PowerReport r;
  r.mode = mode;
  r.frequency_mhz = f;
  const double fs = p.sampling_hz(mode);
  // uJ * Hz = uW; reported in mW.
  auto add = [&](std::string name, double uw) { r.breakdown.push_back({std::move(name), uw / 1000.0, 0.0}); };
  switch (mode) {
    case OperatingMode::kRawData:
      add("get_data", p.e_get_uj * fs);
      add("send", p.e_send_uj / p.raw_batch * fs);
      break;
    case OperatingMode::kBasicBalance:
      add("get_data+balance", p.e_get_balance_uj * fs);
      add("threshold", p.e_threshold_uj * p.balance_result_hz);
      add("send", p.e_send_uj * p.balance_result_hz);
      break;
    case OperatingMode::kCnnProcessing:
      add("get_data+balance", p.e_get_balance_uj * fs);
      add("cnn", p.e_cnn_uj * p.cnn_result_hz);
      add("threshold", p.e_threshold_uj * p.cnn_result_hz);
      add("send", p.e_send_uj * p.cnn_result_hz);
      break;
  }
  r.breakdown.push_back({"idle", p.idle_power_mw(f), 0.0});
  for (const auto& s : r.breakdown) r.total_mw += s.mw;
  for (auto& s : r.breakdown) s.percent = 100.0 * s.mw / r.total_mw;
  return r;
}

double savings(OperatingMode from, OperatingMode to, const PowerParams& p) {
  return 100.0 * (1.0 - om_power(to, p).total_mw / om_power(from, p).total_mw);
}

void EnergyMeter::charge_task(TaskKind t) { task_uj_[static_cast<std::size_t>(t)] += params_.task_energy_uj(t); }

void EnergyMeter::charge_idle(std::int64_t duration_ns, int frequency_mhz) {
  if (duration_ns <= 0) return;
  // mW * ns = 1e-6 uJ
  idle_uj_ += params_.idle_power_mw(frequency_mhz) * static_cast<double>(duration_ns) * 1e-6;
}

double EnergyMeter::total_uj() const {
  double total = idle_uj_;
  for (double e : task_uj_) total += e;
  return total;
}

Reconciliation reconcile(const Trace& trace, const PowerParams& p, double from_s) {
  std::set<std::pair<std::string, int>> configs;
  std::optional<std::pair<double, double>> start;  // (t_s, energy)
  std::optional<std::pair<double, double>> end;
  for (const TraceRecord& rec : trace.records) {
    if (rec.kind == "reconfigure") {
      configs.emplace(rec.detail.at("mode").get<std::string>(), rec.detail.at("frequency_mhz").get<int>());
      if (!start && from_s <= kTickToleranceS && rec.t_ns == 0) start = {0.0, 0.0};
    } else if (rec.kind == "tick" && !start && std::abs(rec.t_s() - from_s) < kTickToleranceS) {
      start = {rec.t_s(), rec.detail.at("energy_uj").get<double>()};
    } else if (rec.kind == "end") {
      end = {rec.t_s(), rec.detail.at("energy_uj").get<double>()};
    }
  }
  if (configs.empty()) throw std::invalid_argument("trace has no configuration record");
  if (configs.size() > 1) throw std::invalid_argument("reconcile needs a single-mode trace");
  if (!start) throw std::invalid_argument("trace has no tick at the requested start time");
  if (!end) throw std::invalid_argument("trace has no end record");
  if (!(end->first > start->first)) throw std::invalid_argument("empty reconciliation span");

  const auto& [mode_str, freq] = *configs.begin();
  Reconciliation r;
  r.mode = mode_from_name(mode_str);
  r.frequency_mhz = freq;
  r.span_s = end->first - start->first;
  r.analytic_mw = om_power(r.mode, p, freq).total_mw;
  r.simulated_mw = (end->second - start->second) / r.span_s / 1000.0;
  r.relative_error = std::abs(r.simulated_mw - r.analytic_mw) / r.analytic_mw;
  return r;
}

nlohmann::json to_json(const PowerReport& r) {
  nlohmann::json shares = nlohmann::json::array();
  for (const auto& s : r.breakdown) shares.push_back({{"task", s.name}, {"mw", s.mw}, {"percent", s.percent}});
  return {{"mode", std::string(mode_name(r.mode))},
          {"frequency_mhz", r.frequency_mhz},
          {"total_mw", r.total_mw},
          {"breakdown", std::move(shares)}};
}

nlohmann::json to_json(const Reconciliation& r) {
  return {{"mode", std::string(mode_name(r.mode))}, {"frequency_mhz", r.frequency_mhz},
          {"span_s", r.span_s},                     {"analytic_mw", r.analytic_mw},
          {"simulated_mw", r.simulated_mw},         {"relative_error", r.relative_error}};
}

}  // namespace wobble::power
