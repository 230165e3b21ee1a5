#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <stdexcept>

#include "spikebudget/encoding.hpp"

namespace spikebudget {

class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spike budget and clipped proportional controller settings.
struct BudgetConfig {
  double r_target = 0.10;
  double eta = 0.2;
  double lambda_min = 0.0;
  double lambda_max = 5.0;
  std::size_t window = 5;

  void validate() const;

  /// Poisson-coded frame data.
  static BudgetConfig frame_preset() { return {}; }
  /// Native event streams: much sparser target.
  static BudgetConfig event_preset() {
    BudgetConfig c;
    c.r_target = 0.02;
    return c;
  }
};

struct BudgetControllerState {
  double lambda_rate = 0.0;
  std::deque<double> rate_window;

  double window_mean() const;
  bool operator==(const BudgetControllerState&) const = default;
};

/// Fraction of (timestep, sample, unit) entries that spiked.
double spike_rate(const SpikeTensor& spikes);

struct BudgetPenalty {
  double value = 0.0;
  double d_rate = 0.0;  // derivative wrt the spike rate
};

/// lambda * (r - r_target)^2 and its derivative 2 * lambda * (r - r_target).
BudgetPenalty budget_penalty(double r_spike, double r_target, double lambda_rate);

/// Push r_batch into the rate window without touching lambda.
BudgetControllerState observe_rate(BudgetControllerState state, const BudgetConfig& cfg,
                                   double r_batch);

/// Push r_batch, then lambda <- clip(lambda + eta * (mean(window) - r_target)).
BudgetControllerState controller_update(BudgetControllerState state, const BudgetConfig& cfg,
                                        double r_batch);

/// One row of the per-step budget log.
struct BudgetLogEntry {
  std::uint64_t step = 0;
  std::size_t task = 0;
  double r_batch = 0.0;
  double r_window = 0.0;
  double lambda_rate = 0.0;
  double penalty = 0.0;
  double loss = 0.0;

  bool operator==(const BudgetLogEntry&) const = default;
};

}  // namespace spikebudget
