#include "spikebudget/budget.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace spikebudget {

void BudgetConfig::validate() const {
  if (!(r_target > 0.0 && r_target < 1.0)) {
    throw BudgetError(fmt::format("r_target {} must lie in (0, 1)", r_target));
  }
  if (!(eta > 0.0)) throw BudgetError(fmt::format("eta {} must be positive", eta));
  if (!(lambda_min >= 0.0 && lambda_min < lambda_max)) {
    throw BudgetError(fmt::format("lambda bounds [{}, {}] are invalid", lambda_min, lambda_max));
  }
  if (window == 0) throw BudgetError("rate window must hold at least one batch");
}

double BudgetControllerState::window_mean() const {
  if (rate_window.empty()) return 0.0;
  return std::accumulate(rate_window.begin(), rate_window.end(), 0.0) /
         static_cast<double>(rate_window.size());
}

double spike_rate(const SpikeTensor& spikes) {
  if (spikes.empty()) throw BudgetError("spike_rate: empty tensor");
  if (!spikes.is_binary()) throw BudgetError("spike_rate: tensor is not binary");
  return static_cast<double>(spikes.count()) / static_cast<double>(spikes.size());
}

BudgetPenalty budget_penalty(double r_spike, double r_target, double lambda_rate) {
  const double diff = r_spike - r_target;
  return {lambda_rate * diff * diff, 2.0 * lambda_rate * diff};
}

BudgetControllerState observe_rate(BudgetControllerState state, const BudgetConfig& cfg,
                                   double r_batch) {
  if (!(r_batch >= 0.0 && r_batch <= 1.0)) {
    throw BudgetError(fmt::format("batch spike rate {} outside [0, 1]", r_batch));
  }
  state.rate_window.push_back(r_batch);
  while (state.rate_window.size() > cfg.window) state.rate_window.pop_front();
  return state;
}

BudgetControllerState controller_update(BudgetControllerState state, const BudgetConfig& cfg,
                                        double r_batch) {
  state = observe_rate(std::move(state), cfg, r_batch);
  // Mean of per-entry errors: exactly zero when every entry equals the target.
  double error = 0.0;
  for (double r : state.rate_window) error += r - cfg.r_target;
  error /= static_cast<double>(state.rate_window.size());
  state.lambda_rate = std::clamp(state.lambda_rate + cfg.eta * error, cfg.lambda_min, cfg.lambda_max);
  return state;
}

}  // namespace spikebudget
