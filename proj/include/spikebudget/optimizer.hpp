#pragma once

#include <cstdint>

#include "spikebudget/params.hpp"

namespace spikebudget {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Real>
struct OptimizerState {
  AdamConfig config;
  ParamTensors<Real> first_moment;
  ParamTensors<Real> second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_params(const ParamTensors<Real>& params, AdamConfig config = {}) {
    return {config, params.zeros_like(), params.zeros_like(), 0};
  }
};

/// Global L2 norm over every group.
template <typename Real>
double global_norm(const ParamTensors<Real>& grads);

/// Rescale all groups by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm before clipping.
template <typename Real>
double clip_gradients(ParamTensors<Real>& grads, double max_norm = 1.0);

/// Bias-corrected Adam update of every group.
template <typename Real>
void adam_step(ParamTensors<Real>& params, const ParamTensors<Real>& grads,
               OptimizerState<Real>& state);

}  // namespace spikebudget
