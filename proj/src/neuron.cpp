#include "spikebudget/neuron.hpp"

#include <fmt/format.h>

namespace spikebudget {

namespace {

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  // log(1 + e^x) without overflow for large x.
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

double beta_from_raw(double beta_raw) { return logistic(beta_raw); }

double vthr_from_raw(double vthr_raw) { return kThresholdFloor + softplus(vthr_raw); }

LifParams LifParams::from_constrained(double beta, double v_thr, bool learnable, double slope) {
  if (!(beta > 0.0 && beta < 1.0)) throw NeuronError("beta must lie in (0, 1)");
  if (!(v_thr > kThresholdFloor)) throw NeuronError("v_thr must exceed the 0.01 floor");
  if (!(slope > 0.0)) throw NeuronError("surrogate slope must be positive");
  LifParams p;
  p.beta_raw = std::log(beta / (1.0 - beta));
  // inverse softplus: log(e^y - 1)
  const double y = v_thr - kThresholdFloor;
  p.vthr_raw = y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
  p.slope = slope;
  p.learnable = learnable;
  return p;
}

LifCoefficients constrain(const LifParams& params) {
  LifCoefficients c;
  c.beta = logistic(params.beta_raw);
  c.v_thr = vthr_from_raw(params.vthr_raw);
  c.dbeta_draw = c.beta * (1.0 - c.beta);
  c.dvthr_draw = logistic(params.vthr_raw);
  c.slope = params.slope;
  return c;
}

template <typename Real>
void lif_step(LifLayerState<Real>& state, std::span<const Real> current,
              const LifCoefficients& coeff, SpikeMode mode, std::span<Real> spikes) {
  const std::size_t n = state.width();
  if (current.size() != n || spikes.size() != n || state.s_prev.size() != n) {
    throw NeuronError(fmt::format("lif_step: width mismatch (state {}, current {}, spikes {})", n,
                                  current.size(), spikes.size()));
  }
  const Real beta = static_cast<Real>(coeff.beta);
  const Real v_thr = static_cast<Real>(coeff.v_thr);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(current[i])) {
      throw NeuronError(fmt::format("lif_step: non-finite input current at unit {}", i));
    }
    const Real u = beta * state.u[i] + current[i] - state.s_prev[i] * v_thr;
    state.u[i] = u;
    if (mode == SpikeMode::kHeaviside) {
      spikes[i] = u >= v_thr ? Real(1) : Real(0);
    } else {
      spikes[i] = static_cast<Real>(relaxed_spike(static_cast<double>(u - v_thr), coeff.slope));
    }
    state.s_prev[i] = spikes[i];
  }
}

template <typename Real>
std::vector<Real> lif_step(LifLayerState<Real>& state, std::span<const Real> current,
                           const LifParams& params) {
  std::vector<Real> spikes(state.width());
  lif_step<Real>(state, current, constrain(params), SpikeMode::kHeaviside, spikes);
  return spikes;
}

template <typename Real>
std::vector<Real> lif_step_relaxed(LifLayerState<Real>& state, std::span<const Real> current,
                                   const LifParams& params) {
  std::vector<Real> spikes(state.width());
  lif_step<Real>(state, current, constrain(params), SpikeMode::kRelaxed, spikes);
  return spikes;
}

#define SPIKEBUDGET_INSTANTIATE_LIF(Real)                                                      \
  template void lif_step<Real>(LifLayerState<Real>&, std::span<const Real>,                     \
                               const LifCoefficients&, SpikeMode, std::span<Real>);             \
  template std::vector<Real> lif_step<Real>(LifLayerState<Real>&, std::span<const Real>,        \
                                            const LifParams&);                                  \
  template std::vector<Real> lif_step_relaxed<Real>(LifLayerState<Real>&,                       \
                                                    std::span<const Real>, const LifParams&);

SPIKEBUDGET_INSTANTIATE_LIF(float)
SPIKEBUDGET_INSTANTIATE_LIF(double)

#undef SPIKEBUDGET_INSTANTIATE_LIF

}  // namespace spikebudget
