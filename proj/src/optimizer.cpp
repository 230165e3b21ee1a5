#include "spikebudget/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace spikebudget {

template <typename Real>
double global_norm(const ParamTensors<Real>& grads) {
  double sq = 0.0;
  for (const auto& g : grads.groups) {
    for (Real v : g) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(sq);
}

template <typename Real>
double clip_gradients(ParamTensors<Real>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads.groups) {
      for (Real& v : g) v = static_cast<Real>(static_cast<double>(v) * scale);
    }
  }
  return norm;
}

template <typename Real>
void adam_step(ParamTensors<Real>& params, const ParamTensors<Real>& grads,
               OptimizerState<Real>& state) {
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t g = 0; g < kNumParamGroups; ++g) {
    auto& p = params.groups[g];
    const auto& grad = grads.groups[g];
    auto& m = state.first_moment.groups[g];
    auto& v = state.second_moment.groups[g];
    if (grad.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
      throw std::invalid_argument("adam_step: gradient/moment shape differs from parameters");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(grad[i]);
      const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * gi;
      const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double update = c.learning_rate * (mi / bias1) / (std::sqrt(vi / bias2) + c.epsilon);
      p[i] = static_cast<Real>(static_cast<double>(p[i]) - update);
    }
  }
}

template double global_norm<float>(const ParamTensors<float>&);
template double global_norm<double>(const ParamTensors<double>&);
template double clip_gradients<float>(ParamTensors<float>&, double);
template double clip_gradients<double>(ParamTensors<double>&, double);
template void adam_step<float>(ParamTensors<float>&, const ParamTensors<float>&,
                               OptimizerState<float>&);
template void adam_step<double>(ParamTensors<double>&, const ParamTensors<double>&,
                                OptimizerState<double>&);

}  // namespace spikebudget
