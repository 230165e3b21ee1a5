#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "spikebudget/encoding.hpp"
#include "spikebudget/neuron.hpp"
#include "spikebudget/params.hpp"

namespace spikebudget {

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NetworkDims {
  std::size_t input = 784;
  std::size_t hidden = 128;
  std::size_t output = 10;

  bool operator==(const NetworkDims&) const = default;
};

/// Everything the backward pass needs from one forward pass over a batch.
///
/// membrane/spikes are laid out (t, b, h). In kHeaviside mode the spikes are
/// exactly 0/1; in kRelaxed mode they are soft values.
template <typename Real>
struct ForwardRecord {
  std::size_t timesteps = 0;
  std::size_t batch = 0;
  std::size_t hidden = 0;
  std::size_t output = 0;
  SpikeMode mode = SpikeMode::kHeaviside;
  std::uint64_t net_version = 0;

  std::vector<Real> logits;  // (b, class)
  std::vector<Real> membrane;
  std::vector<Real> spikes;
  SpikeTensor input;

  std::span<const Real> logits_row(std::size_t b) const { return {logits.data() + b * output, output}; }

  /// Total hidden activity (spike count in kHeaviside mode).
  double spike_sum() const;
  /// Hidden spikes as a (T, B, H) binary tensor. kHeaviside records only.
  SpikeTensor hidden_spikes() const;
};

/// Mean softmax cross-entropy over the batch, restricted to active classes.
/// `active` has one byte per output class.
template <typename Real>
double task_loss(std::span<const Real> logits, std::size_t classes, std::span<const int> labels,
                 std::span<const std::uint8_t> active);

/// task_loss plus its gradient wrt the logits (zero on inactive classes).
template <typename Real>
double task_loss_grad(std::span<const Real> logits, std::size_t classes,
                      std::span<const int> labels, std::span<const std::uint8_t> active,
                      std::vector<Real>& dlogits);

/// Argmax over active classes, ties toward the lowest index.
template <typename Real>
int masked_argmax(std::span<const Real> logits, std::span<const std::uint8_t> active);

/// Linear -> LIF -> Linear spiking classifier with a single masked head.
///
/// Logits are the time-mean of the output layer's pre-activations. The LIF
/// layer has one scalar beta and one scalar threshold, both carried raw in
/// the parameter set and optionally learnable.
template <typename Real>
class BasicFcSnn {
 public:
  BasicFcSnn(NetworkDims dims, const LifParams& lif, Rng& init_rng);

  const NetworkDims& dims() const { return dims_; }
  const ParamTensors<Real>& params() const { return params_; }
  /// Mutable access invalidates outstanding forward records.
  ParamTensors<Real>& mutable_params() {
    ++version_;
    return params_;
  }
  std::uint64_t version() const { return version_; }

  LifParams lif_params() const;
  bool lif_learnable() const { return lif_learnable_; }
  void set_lif_learnable(bool learnable) { lif_learnable_ = learnable; }
  double surrogate_slope() const { return slope_; }

  std::span<const std::uint8_t> active_mask() const { return active_; }
  void activate_class(int label);
  void set_active_mask(std::vector<std::uint8_t> mask);
  bool is_active(int label) const;

  ForwardRecord<Real> forward(const SpikeTensor& input,
                              SpikeMode mode = SpikeMode::kHeaviside) const;

  /// BPTT through the LIF recurrence with dS/dU replaced by the fast-sigmoid
  /// surrogate. `budget_grad_coeff` is dL/dr for the batch spike rate
  /// r = sum(s) / (H * T * B); it reaches every hidden spike uniformly.
  ParamTensors<Real> backward(const ForwardRecord<Real>& record, std::span<const int> labels,
                              double budget_grad_coeff) const;

  std::vector<int> predict(const ForwardRecord<Real>& record) const;

 private:
  NetworkDims dims_;
  ParamTensors<Real> params_;
  bool lif_learnable_ = false;
  double slope_ = kDefaultSurrogateSlope;
  std::vector<std::uint8_t> active_;
  std::uint64_t version_ = 1;
};

using FcSnn = BasicFcSnn<float>;
using FcSnn64 = BasicFcSnn<double>;

}  // namespace spikebudget
