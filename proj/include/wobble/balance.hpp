#pragma once

// First-level analysis: how level the board stayed, and whether it stopped.

#include <span>

#include "wobble/signal.hpp"

namespace wobble::balance {

struct BalanceConfig {
  double tolerance = 100.0;          // magnitude still counted as level (counts)
  double ground_magnitude = 1000.0;  // magnitude of an edge touching the floor (counts)
  double stop_sigma = 5.0;           // per-axis standard deviation below which the board is stopped
  double result_period_s = 1.0;

  void validate() const;
};

struct BalanceResult {
  double t_s = 0.0;
  int percent = 0;
  bool stopped = false;
};

/// Per sample score 1 at or below the tolerance, 0 at or beyond the ground
/// magnitude, linear in between; returns round(100 * mean score).
/// Throws std::invalid_argument on an empty window.
int balance_percent(std::span<const signal::Sample> window, const BalanceConfig& cfg);

/// True iff the population standard deviation of both axes is below stop_sigma.
/// Throws std::invalid_argument for fewer than two samples.
bool detect_stop(std::span<const signal::Sample> window, const BalanceConfig& cfg);

}  // namespace wobble::balance
