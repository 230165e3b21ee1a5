#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace spikebudget {

inline constexpr double kDefaultSurrogateSlope = 25.0;
inline constexpr double kThresholdFloor = 0.01;
/// Value of a relaxed spike exactly at threshold.
inline constexpr double kRelaxedSpikeOffset = 0.5;

/// How the forward pass turns membrane potential into spikes.
///   kHeaviside - exact binary spikes (training and inference)
///   kRelaxed   - smooth stand-in whose derivative is the surrogate; gradient
///                verification only
enum class SpikeMode { kHeaviside, kRelaxed };

class NeuronError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Layer-wise LIF parameters held as unconstrained carriers.
///
/// beta = logistic(beta_raw) lies in (0, 1); v_thr = 0.01 + softplus(vthr_raw).
struct LifParams {
  double beta_raw = 0.0;
  double vthr_raw = 0.0;
  double slope = kDefaultSurrogateSlope;
  bool learnable = false;

  /// Carriers that map back onto the requested (beta, v_thr).
  static LifParams from_constrained(double beta, double v_thr, bool learnable,
                                    double slope = kDefaultSurrogateSlope);
};

/// Constrained values plus the derivatives of the maps wrt the raw carriers.
struct LifCoefficients {
  double beta = 0.0;
  double v_thr = 0.0;
  double dbeta_draw = 0.0;
  double dvthr_draw = 0.0;
  double slope = kDefaultSurrogateSlope;
};

LifCoefficients constrain(const LifParams& params);

double beta_from_raw(double beta_raw);
double vthr_from_raw(double vthr_raw);

/// Fast-sigmoid surrogate of dS/dU: 1 / (1 + k|u - v_thr|)^2.
inline double surrogate_grad(double u, double v_thr, double k) {
  const double d = 1.0 + k * std::abs(u - v_thr);
  return 1.0 / (d * d);
}

/// x / (1 + k|x|) + offset. Its derivative is exactly the fast-sigmoid
/// surrogate, so a relaxed forward pass differentiates to the same BPTT.
inline double relaxed_spike(double x, double k) {
  return x / (1.0 + k * std::abs(x)) + kRelaxedSpikeOffset;
}

/// Membrane potential and previous-step spikes of one layer for one sample.
template <typename Real>
struct LifLayerState {
  std::vector<Real> u;
  std::vector<Real> s_prev;

  LifLayerState() = default;
  explicit LifLayerState(std::size_t width) : u(width, Real(0)), s_prev(width, Real(0)) {}

  std::size_t width() const { return u.size(); }
  void reset() {
    std::fill(u.begin(), u.end(), Real(0));
    std::fill(s_prev.begin(), s_prev.end(), Real(0));
  }
};

/// One timestep: u' = beta*u + I - s_prev*v_thr, spike where u' >= v_thr.
/// Writes the spikes to `spikes` and stores them as the state's s_prev.
template <typename Real>
void lif_step(LifLayerState<Real>& state, std::span<const Real> current,
              const LifCoefficients& coeff, SpikeMode mode, std::span<Real> spikes);

/// Allocating convenience form of lif_step with binary spikes.
template <typename Real>
std::vector<Real> lif_step(LifLayerState<Real>& state, std::span<const Real> current,
                           const LifParams& params);

/// Allocating convenience form with relaxed spikes.
template <typename Real>
std::vector<Real> lif_step_relaxed(LifLayerState<Real>& state, std::span<const Real> current,
                                   const LifParams& params);

}  // namespace spikebudget
