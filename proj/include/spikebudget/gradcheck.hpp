#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "spikebudget/network.hpp"
#include "spikebudget/params.hpp"

namespace spikebudget {

/// Shape and seed of one randomized gradient check.
struct GradcheckSpec {
  std::size_t input = 8;
  std::size_t hidden = 6;
  std::size_t output = 3;
  std::size_t timesteps = 4;
  std::size_t batch = 3;
  std::uint64_t seed = 1;
  double step = 1e-5;
};

struct GradcheckReport {
  GradcheckSpec spec;
  std::array<double, kNumParamGroups> max_rel_error{};
  double worst = 0.0;
  std::size_t checked = 0;
};

/// Loss the relaxed network is differentiated against: cross-entropy over
/// active classes plus lambda * (r - r_target)^2, with r the mean soft spike.
double relaxed_total_loss(const FcSnn64& net, const SpikeTensor& input, std::span<const int> labels,
                          double lambda_rate, double r_target);

/// Central finite differences of relaxed_total_loss wrt every parameter.
ParamTensors<double> finite_difference_gradients(const FcSnn64& net, const SpikeTensor& input,
                                                 std::span<const int> labels, double lambda_rate,
                                                 double r_target, double step);

/// |a - b| / max(|a|, |b|, 1e-6).
double relative_error(double analytic, double numeric);

/// Build a random tiny learnable network and batch from `spec`, and compare
/// relaxed-mode BPTT against finite differences for every parameter group.
GradcheckReport run_gradcheck(const GradcheckSpec& spec);

}  // namespace spikebudget
