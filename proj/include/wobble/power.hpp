#pragma once

// Analytic per-mode power model built from per-task energies and
// frequency-dependent idle power, plus the energy meter the simulator charges.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wobble/mode.hpp"
#include "wobble/trace.hpp"

namespace wobble::power {

class FeasibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PowerParams {
  // Energy per invocation (uJ). Balance alone is e_get_balance_uj - e_get_uj.
  double e_get_uj = 2.96;
  double e_get_balance_uj = 3.76;
  double e_cnn_uj = 852.38;
  double e_threshold_uj = 2.73;
  double e_send_uj = 83.96;

  // Cycles per invocation.
  std::uint64_t cycles_get = 841;
  std::uint64_t cycles_balance = 1550;
  std::uint64_t cycles_cnn = 2219582;
  std::uint64_t cycles_threshold = 910;
  std::uint64_t cycles_send = 25000;

  // Platform idle power (mW) by system frequency (MHz).
  std::map<int, double> idle_mw{{2, 2.609}, {4, 3.101}, {8, 4.546}};

  int raw_batch = 4;                          // samples per BLE packet (1 / alpha)
  double raw_sampling_hz = 100.0;
  double processed_sampling_hz = 100.0 / 7.0;
  double balance_result_hz = 1.0;
  double cnn_result_hz = 1.0;
  int raw_min_frequency_mhz = 8;              // BLE streaming floor

  /// Throws std::invalid_argument if any constant is non-positive.
  void validate() const;

  /// Throws std::out_of_range for a frequency without an idle figure.
  double idle_power_mw(int frequency_mhz) const;
  double task_energy_uj(TaskKind t) const;
  std::uint64_t task_cycles(TaskKind t) const;
  double sampling_hz(OperatingMode m) const;
};

struct TaskShare {
  std::string name;
  double mw = 0.0;
  double percent = 0.0;
};

struct PowerReport {
  OperatingMode mode = OperatingMode::kRawData;
  int frequency_mhz = 0;
  double total_mw = 0.0;
  std::vector<TaskShare> breakdown;  // includes the idle share
};

/// Raw:     (E_g + E_s / batch) f_s + P_idle
/// Balance: E_gb f_s + (E_t + E_s) f_b + P_idle
/// CNN:     E_gb f_s + (E_c + E_t + E_s) f_c + P_idle
/// Frequency defaults to min_feasible_frequency; an explicit one must be
/// feasible (FeasibilityError) and known (std::out_of_range).
PowerReport om_power(OperatingMode mode, const PowerParams& p,
                     std::optional<int> frequency_mhz = std::nullopt);

/// 100 * (1 - P_to / P_from).
double savings(OperatingMode from, OperatingMode to, const PowerParams& p);

/// Worst-case cycles per second of the mode's task set.
double cycle_demand(OperatingMode mode, const PowerParams& p);

/// Smallest tabulated frequency covering the cycle demand and the mode's floor.
int min_feasible_frequency(OperatingMode mode, const PowerParams& p);

/// Throws FeasibilityError if the mode cannot run at frequency_mhz.
void check_feasible(OperatingMode mode, int frequency_mhz, const PowerParams& p);

/// cycles / f, in microseconds.
double execution_time_us(std::uint64_t cycles, int frequency_mhz);

class EnergyMeter {
 public:
  explicit EnergyMeter(PowerParams p) : params_(std::move(p)) {}

  void charge_task(TaskKind t);
  void charge_idle(std::int64_t duration_ns, int frequency_mhz);

  double total_uj() const;
  double task_uj(TaskKind t) const { return task_uj_[static_cast<std::size_t>(t)]; }
  double idle_uj() const { return idle_uj_; }
  const PowerParams& params() const { return params_; }

 private:
  PowerParams params_;
  std::array<double, kNumTasks> task_uj_{};
  double idle_uj_ = 0.0;
};

struct Reconciliation {
  OperatingMode mode = OperatingMode::kRawData;
  int frequency_mhz = 0;
  double span_s = 0.0;
  double analytic_mw = 0.0;
  double simulated_mw = 0.0;
  double relative_error = 0.0;
};

/// Average simulated power between from_s (an ADAM tick, or the start) and
/// the end of the trace, against om_power for the trace's single mode.
/// Throws std::invalid_argument for mixed-mode or incomplete traces.
Reconciliation reconcile(const Trace& trace, const PowerParams& p, double from_s = 0.0);

nlohmann::json to_json(const PowerReport& r);
nlohmann::json to_json(const Reconciliation& r);

}  // namespace wobble::power
