#include "spikebudget/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace spikebudget {

double relaxed_total_loss(const FcSnn64& net, const SpikeTensor& input, std::span<const int> labels,
                          double lambda_rate, double r_target) {
  const auto rec = net.forward(input, SpikeMode::kRelaxed);
  const double ce = task_loss<double>(rec.logits, net.dims().output, labels, net.active_mask());
  const double r = rec.spike_sum() / static_cast<double>(rec.spikes.size());
  return ce + lambda_rate * (r - r_target) * (r - r_target);
}

ParamTensors<double> finite_difference_gradients(const FcSnn64& net, const SpikeTensor& input,
                                                 std::span<const int> labels, double lambda_rate,
                                                 double r_target, double step) {
  FcSnn64 probe = net;
  ParamTensors<double> grads = net.params().zeros_like();
  for (std::size_t g = 0; g < kNumParamGroups; ++g) {
    for (std::size_t i = 0; i < grads.groups[g].size(); ++i) {
      const double original = probe.params().groups[g][i];
      probe.mutable_params().groups[g][i] = original + step;
      const double up = relaxed_total_loss(probe, input, labels, lambda_rate, r_target);
      probe.mutable_params().groups[g][i] = original - step;
      const double down = relaxed_total_loss(probe, input, labels, lambda_rate, r_target);
      probe.mutable_params().groups[g][i] = original;
      grads.groups[g][i] = (up - down) / (2.0 * step);
    }
  }
  return grads;
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

GradcheckReport run_gradcheck(const GradcheckSpec& spec) {
  Rng rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };

  const double beta = uniform(0.5, 0.95);
  const double v_thr = uniform(0.5, 1.5);
  FcSnn64 net({spec.input, spec.hidden, spec.output},
              LifParams::from_constrained(beta, v_thr, /*learnable=*/true), rng);
  // Wider weights than the default init so membranes visit both sides of
  // threshold within a few steps.
  for (auto g : {kW1, kB1, kW2, kB2}) {
    for (double& w : net.mutable_params()[g]) w = uniform(-1.0, 1.0);
  }

  std::vector<int> labels(spec.batch);
  for (std::size_t c = 0; c < spec.output; ++c) net.activate_class(static_cast<int>(c));
  for (auto& y : labels) y = static_cast<int>(rng() % spec.output);

  SpikeTensor input(spec.timesteps, spec.batch, spec.input);
  for (std::size_t t = 0; t < spec.timesteps; ++t) {
    for (std::size_t b = 0; b < spec.batch; ++b) {
      for (auto& v : input.row(t, b)) v = uniform01(rng) < 0.4 ? 1 : 0;
    }
  }
  const double lambda_rate = uniform(0.0, 5.0);
  const double r_target = uniform(0.05, 0.95);

  const auto rec = net.forward(input, SpikeMode::kRelaxed);
  const double r = rec.spike_sum() / static_cast<double>(rec.spikes.size());
  const double coeff = 2.0 * lambda_rate * (r - r_target);
  const auto analytic = net.backward(rec, labels, coeff);
  const auto numeric = finite_difference_gradients(net, input, labels, lambda_rate, r_target, spec.step);

  GradcheckReport report;
  report.spec = spec;
  for (std::size_t g = 0; g < kNumParamGroups; ++g) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.groups[g].size(); ++i) {
      worst = std::max(worst, relative_error(analytic.groups[g][i], numeric.groups[g][i]));
      ++report.checked;
    }
    report.max_rel_error[g] = worst;
    report.worst = std::max(report.worst, worst);
  }
  return report;
}

}  // namespace spikebudget
