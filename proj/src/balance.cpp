#include "wobble/balance.hpp"

#include <cmath>
#include <stdexcept>

namespace wobble::balance {

void BalanceConfig::validate() const {
  if (!(tolerance > 0.0 && tolerance < ground_magnitude)) {
    throw std::invalid_argument("balance config requires 0 < tolerance < ground_magnitude");
  }
  if (!(stop_sigma >= 0.0)) throw std::invalid_argument("stop_sigma must be non-negative");
  if (!(result_period_s > 0.0)) throw std::invalid_argument("result period must be positive");
}

int balance_percent(std::span<const signal::Sample> window, const BalanceConfig& cfg) {
  cfg.validate();
  if (window.empty()) throw std::invalid_argument("balance_percent: empty window");
  double total = 0.0;
  for (const signal::Sample& s : window) {
    const double m = std::hypot(static_cast<double>(s.x), static_cast<double>(s.y));
    if (m <= cfg.tolerance) {
      total += 1.0;
    } else if (m < cfg.ground_magnitude) {
      total += (cfg.ground_magnitude - m) / (cfg.ground_magnitude - cfg.tolerance);
    }
  }
  const double pct = 100.0 * total / static_cast<double>(window.size());
  return static_cast<int>(std::floor(pct + 0.5));
}

bool detect_stop(std::span<const signal::Sample> window, const BalanceConfig& cfg) {
  if (window.size() < 2) throw std::invalid_argument("detect_stop: need at least two samples");
  const double n = static_cast<double>(window.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& s : window) {
    mx += s.x;
    my += s.y;
  }
  mx /= n;
  my /= n;
  double vx = 0.0;
  double vy = 0.0;
  for (const auto& s : window) {
    vx += (s.x - mx) * (s.x - mx);
    vy += (s.y - my) * (s.y - my);
  }
  return std::sqrt(vx / n) < cfg.stop_sigma && std::sqrt(vy / n) < cfg.stop_sigma;
}

}  // namespace wobble::balance
