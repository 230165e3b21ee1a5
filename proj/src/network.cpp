#include "spikebudget/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace spikebudget {

template <typename Real>
double ForwardRecord<Real>::spike_sum() const {
  double sum = 0.0;
  for (Real s : spikes) sum += static_cast<double>(s);
  return sum;
}

template <typename Real>
SpikeTensor ForwardRecord<Real>::hidden_spikes() const {
  if (mode != SpikeMode::kHeaviside) throw NetworkError("hidden_spikes: relaxed record is not binary");
  SpikeTensor out(timesteps, batch, hidden);
  for (std::size_t t = 0; t < timesteps; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      auto row = out.row(t, b);
      const Real* src = spikes.data() + (t * batch + b) * hidden;
      for (std::size_t h = 0; h < hidden; ++h) row[h] = src[h] != Real(0) ? 1 : 0;
    }
  }
  return out;
}

namespace {

void check_labels(std::span<const int> labels, std::size_t batch, std::size_t classes,
                  std::span<const std::uint8_t> active) {
  if (labels.size() != batch) {
    throw NetworkError(fmt::format("{} labels for a batch of {}", labels.size(), batch));
  }
  if (active.size() != classes) throw NetworkError("active mask size differs from class count");
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes || !active[static_cast<std::size_t>(y)]) {
      throw NetworkError(fmt::format("label {} of sample {} is not an active class", y, b));
    }
  }
}

// Log-sum-exp over active classes; fills `probs` with softmax (0 if inactive).
template <typename Real>
double masked_log_softmax_norm(std::span<const Real> row, std::span<const std::uint8_t> active,
                               std::vector<double>& probs) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < row.size(); ++c) {
    if (active[c]) max_logit = std::max(max_logit, static_cast<double>(row[c]));
  }
  double sum = 0.0;
  probs.assign(row.size(), 0.0);
  for (std::size_t c = 0; c < row.size(); ++c) {
    if (!active[c]) continue;
    probs[c] = std::exp(static_cast<double>(row[c]) - max_logit);
    sum += probs[c];
  }
  for (double& p : probs) p /= sum;
  return max_logit + std::log(sum);
}

}  // namespace

template <typename Real>
double task_loss(std::span<const Real> logits, std::size_t classes, std::span<const int> labels,
                 std::span<const std::uint8_t> active) {
  std::vector<Real> unused;
  return task_loss_grad<Real>(logits, classes, labels, active, unused);
}

template <typename Real>
double task_loss_grad(std::span<const Real> logits, std::size_t classes,
                      std::span<const int> labels, std::span<const std::uint8_t> active,
                      std::vector<Real>& dlogits) {
  if (classes == 0 || logits.size() % classes != 0) throw NetworkError("task_loss: bad logit shape");
  const std::size_t batch = logits.size() / classes;
  check_labels(labels, batch, classes, active);
  dlogits.assign(logits.size(), Real(0));
  if (batch == 0) return 0.0;
  std::vector<double> probs;
  double total = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = logits.subspan(b * classes, classes);
    const double norm = masked_log_softmax_norm(row, active, probs);
    const auto y = static_cast<std::size_t>(labels[b]);
    total += norm - static_cast<double>(row[y]);
    for (std::size_t c = 0; c < classes; ++c) {
      const double g = probs[c] - (c == y ? 1.0 : 0.0);
      dlogits[b * classes + c] = active[c] ? static_cast<Real>(g * inv_batch) : Real(0);
    }
  }
  return total * inv_batch;
}

template <typename Real>
int masked_argmax(std::span<const Real> logits, std::span<const std::uint8_t> active) {
  int best = -1;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (!active[c]) continue;
    if (best < 0 || logits[c] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  if (best < 0) throw NetworkError("masked_argmax: no active class");
  return best;
}

// ---------------------------------------------------------------------------

template <typename Real>
BasicFcSnn<Real>::BasicFcSnn(NetworkDims dims, const LifParams& lif, Rng& init_rng)
    : dims_(dims), lif_learnable_(lif.learnable), slope_(lif.slope), active_(dims.output, 0) {
  if (dims.input == 0 || dims.hidden == 0 || dims.output == 0) {
    throw NetworkError("network dimensions must be positive");
  }
  auto fill_uniform = [&init_rng](std::vector<Real>& v, std::size_t n, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    v.resize(n);
    for (auto& x : v) x = static_cast<Real>((2.0 * uniform01(init_rng) - 1.0) * bound);
  };
  fill_uniform(params_[kW1], dims.input * dims.hidden, dims.input);
  fill_uniform(params_[kB1], dims.hidden, dims.input);
  fill_uniform(params_[kW2], dims.hidden * dims.output, dims.hidden);
  fill_uniform(params_[kB2], dims.output, dims.hidden);
  params_[kBetaRaw] = {static_cast<Real>(lif.beta_raw)};
  params_[kVthrRaw] = {static_cast<Real>(lif.vthr_raw)};
}

template <typename Real>
LifParams BasicFcSnn<Real>::lif_params() const {
  LifParams p;
  p.beta_raw = static_cast<double>(params_[kBetaRaw][0]);
  p.vthr_raw = static_cast<double>(params_[kVthrRaw][0]);
  p.slope = slope_;
  p.learnable = lif_learnable_;
  return p;
}

template <typename Real>
void BasicFcSnn<Real>::activate_class(int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= dims_.output) {
    throw NetworkError(fmt::format("class {} outside the {}-way head", label, dims_.output));
  }
  if (!active_[static_cast<std::size_t>(label)]) {
    active_[static_cast<std::size_t>(label)] = 1;
    ++version_;
  }
}

template <typename Real>
void BasicFcSnn<Real>::set_active_mask(std::vector<std::uint8_t> mask) {
  if (mask.size() != dims_.output) throw NetworkError("active mask size differs from head size");
  active_ = std::move(mask);
  ++version_;
}

template <typename Real>
bool BasicFcSnn<Real>::is_active(int label) const {
  return label >= 0 && static_cast<std::size_t>(label) < dims_.output &&
         active_[static_cast<std::size_t>(label)] != 0;
}

template <typename Real>
ForwardRecord<Real> BasicFcSnn<Real>::forward(const SpikeTensor& input, SpikeMode mode) const {
  const std::size_t T = input.timesteps();
  const std::size_t B = input.batch();
  const std::size_t H = dims_.hidden;
  const std::size_t O = dims_.output;
  if (input.units() != dims_.input || T == 0) {
    throw NetworkError(fmt::format("forward: input shape ({}, {}, {}) incompatible with {} inputs",
                                   T, B, input.units(), dims_.input));
  }
  if (!input.is_binary()) throw NetworkError("forward: input spikes must be binary");

  ForwardRecord<Real> rec;
  rec.timesteps = T;
  rec.batch = B;
  rec.hidden = H;
  rec.output = O;
  rec.mode = mode;
  rec.net_version = version_;
  rec.input = input;
  rec.membrane.resize(T * B * H);
  rec.spikes.resize(T * B * H);
  rec.logits.resize(B * O);

  const LifCoefficients coeff = constrain(lif_params());
  const auto& w1 = params_[kW1];
  const auto& b1 = params_[kB1];
  const auto& w2 = params_[kW2];
  const auto& b2 = params_[kB2];

  LifLayerState<Real> state(H);
  std::vector<Real> current(H);
  std::vector<Real> spike_total(H);
  for (std::size_t b = 0; b < B; ++b) {
    state.reset();
    std::fill(spike_total.begin(), spike_total.end(), Real(0));
    for (std::size_t t = 0; t < T; ++t) {
      std::copy(b1.begin(), b1.end(), current.begin());
      const auto x = input.row(t, b);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!x[i]) continue;
        const Real* w = w1.data() + i * H;
        for (std::size_t h = 0; h < H; ++h) current[h] += w[h];
      }
      const std::size_t off = (t * B + b) * H;
      std::span<Real> s(rec.spikes.data() + off, H);
      lif_step<Real>(state, current, coeff, mode, s);
      std::copy(state.u.begin(), state.u.end(), rec.membrane.begin() + static_cast<std::ptrdiff_t>(off));
      for (std::size_t h = 0; h < H; ++h) spike_total[h] += s[h];
    }
    // mean over t of (w2^T s_t + b2) = w2^T (sum_t s_t) / T + b2
    Real* logits = rec.logits.data() + b * O;
    std::copy(b2.begin(), b2.end(), logits);
    const Real inv_t = Real(1) / static_cast<Real>(T);
    for (std::size_t h = 0; h < H; ++h) {
      const Real a = spike_total[h] * inv_t;
      if (a == Real(0)) continue;
      const Real* w = w2.data() + h * O;
      for (std::size_t o = 0; o < O; ++o) logits[o] += a * w[o];
    }
  }
  return rec;
}

template <typename Real>
ParamTensors<Real> BasicFcSnn<Real>::backward(const ForwardRecord<Real>& rec,
                                              std::span<const int> labels,
                                              double budget_grad_coeff) const {
  if (rec.net_version != version_) {
    throw NetworkError("backward: forward record is stale (network changed since forward)");
  }
  const std::size_t T = rec.timesteps;
  const std::size_t B = rec.batch;
  const std::size_t H = dims_.hidden;
  const std::size_t O = dims_.output;

  ParamTensors<Real> grads = params_.zeros_like();
  if (B == 0) return grads;

  std::vector<Real> dlogits;
  task_loss_grad<Real>(rec.logits, O, labels, active_, dlogits);

  const LifCoefficients coeff = constrain(lif_params());
  const double beta = coeff.beta;
  const double v_thr = coeff.v_thr;
  const double k = coeff.slope;
  const double budget_per_spike =
      budget_grad_coeff / (static_cast<double>(H) * static_cast<double>(T) * static_cast<double>(B));

  auto& gw1 = grads[kW1];
  auto& gb1 = grads[kB1];
  auto& gw2 = grads[kW2];
  auto& gb2 = grads[kB2];
  const auto& w2 = params_[kW2];

  double dbeta = 0.0;
  double dvthr = 0.0;
  std::vector<double> direct(H);
  std::vector<double> du_next(H);
  std::vector<double> spike_total(H);
  std::vector<Real> du_real(H);

  for (std::size_t b = 0; b < B; ++b) {
    const Real* dl = dlogits.data() + b * O;
    // Each o_t contributes dl / T; the direct gradient on s_t is therefore the
    // same for every t.
    std::fill(spike_total.begin(), spike_total.end(), 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const Real* s = rec.spikes.data() + (t * B + b) * H;
      for (std::size_t h = 0; h < H; ++h) spike_total[h] += static_cast<double>(s[h]);
    }
    for (std::size_t o = 0; o < O; ++o) gb2[o] += dl[o];
    for (std::size_t h = 0; h < H; ++h) {
      const Real* w = w2.data() + h * O;
      Real* gw = gw2.data() + h * O;
      double acc = 0.0;
      const double mean_s = spike_total[h] / static_cast<double>(T);
      for (std::size_t o = 0; o < O; ++o) {
        acc += static_cast<double>(w[o]) * static_cast<double>(dl[o]);
        gw[o] += static_cast<Real>(mean_s * static_cast<double>(dl[o]));
      }
      direct[h] = acc / static_cast<double>(T) + budget_per_spike;
    }

    std::fill(du_next.begin(), du_next.end(), 0.0);
    for (std::size_t step = T; step-- > 0;) {
      const std::size_t off = (step * B + b) * H;
      const Real* u = rec.membrane.data() + off;
      const Real* u_prev = step > 0 ? rec.membrane.data() + ((step - 1) * B + b) * H : nullptr;
      const Real* s_prev = step > 0 ? rec.spikes.data() + ((step - 1) * B + b) * H : nullptr;
      for (std::size_t h = 0; h < H; ++h) {
        // s_t feeds the reset term of u_{t+1} with weight -v_thr.
        const double ds = direct[h] - v_thr * du_next[h];
        const double sg = surrogate_grad(static_cast<double>(u[h]), v_thr, k);
        const double du = ds * sg + beta * du_next[h];
        dvthr -= ds * sg;
        if (step > 0) {
          dvthr -= static_cast<double>(s_prev[h]) * du;
          dbeta += static_cast<double>(u_prev[h]) * du;
        }
        du_next[h] = du;
        du_real[h] = static_cast<Real>(du);
        gb1[h] += du_real[h];
      }
      const auto x = rec.input.row(step, b);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!x[i]) continue;
        Real* gw = gw1.data() + i * H;
        for (std::size_t h = 0; h < H; ++h) gw[h] += du_real[h];
      }
    }
  }

  if (lif_learnable_) {
    grads[kBetaRaw][0] = static_cast<Real>(dbeta * coeff.dbeta_draw);
    grads[kVthrRaw][0] = static_cast<Real>(dvthr * coeff.dvthr_draw);
  }
  return grads;
}

template <typename Real>
std::vector<int> BasicFcSnn<Real>::predict(const ForwardRecord<Real>& record) const {
  std::vector<int> out(record.batch);
  for (std::size_t b = 0; b < record.batch; ++b) {
    out[b] = masked_argmax<Real>(record.logits_row(b), active_);
  }
  return out;
}

#define SPIKEBUDGET_INSTANTIATE_NETWORK(Real)                                                   \
  template struct ForwardRecord<Real>;                                                         \
  template class BasicFcSnn<Real>;                                                             \
  template double task_loss<Real>(std::span<const Real>, std::size_t, std::span<const int>,    \
                                  std::span<const std::uint8_t>);                              \
  template double task_loss_grad<Real>(std::span<const Real>, std::size_t,                     \
                                       std::span<const int>, std::span<const std::uint8_t>,    \
                                       std::vector<Real>&);                                    \
  template int masked_argmax<Real>(std::span<const Real>, std::span<const std::uint8_t>);

SPIKEBUDGET_INSTANTIATE_NETWORK(float)
SPIKEBUDGET_INSTANTIATE_NETWORK(double)

#undef SPIKEBUDGET_INSTANTIATE_NETWORK

}  // namespace spikebudget
