#include "spikebudget/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include <fmt/format.h>

namespace spikebudget {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'K', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void tensors(const ParamTensors<float>& t) {
    for (std::size_t g = 0; g < kNumParamGroups; ++g) {
      str(kParamGroupNames[g]);
      uint(static_cast<std::uint64_t>(t.groups[g].size()));
      for (float v : t.groups[g]) f32(v);
    }
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  const std::uint8_t* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U uint() {
    const auto* p = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(U{p[i]} << (8 * i));
    return v;
  }
  std::uint8_t u8() { return *take(1); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    const auto* p = take(n);
    return {reinterpret_cast<const char*>(p), n};
  }
  void tensors(ParamTensors<float>& t) {
    for (std::size_t g = 0; g < kNumParamGroups; ++g) {
      const auto name = str();
      if (name != kParamGroupNames[g]) {
        throw CheckpointError(fmt::format("expected tensor '{}', found '{}'", kParamGroupNames[g], name));
      }
      const auto count = uint<std::uint64_t>();
      if (count != t.groups[g].size()) {
        throw CheckpointError(fmt::format("tensor '{}' has {} values, expected {}", name, count,
                                          t.groups[g].size()));
      }
      for (auto& v : t.groups[g]) v = f32();
    }
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.uint(kFormatVersion);
  const auto& dims = ckpt.net.dims();
  w.uint(static_cast<std::uint32_t>(dims.input));
  w.uint(static_cast<std::uint32_t>(dims.hidden));
  w.uint(static_cast<std::uint32_t>(dims.output));
  w.u8(ckpt.net.lif_learnable() ? 1 : 0);
  w.f64(ckpt.net.surrogate_slope());
  for (auto a : ckpt.net.active_mask()) w.u8(a);
  w.tensors(ckpt.net.params());

  const auto& opt = ckpt.optimizer;
  w.f64(opt.config.learning_rate);
  w.f64(opt.config.beta1);
  w.f64(opt.config.beta2);
  w.f64(opt.config.epsilon);
  w.uint(opt.step);
  w.tensors(opt.first_moment);
  w.tensors(opt.second_moment);

  w.f64(ckpt.controller.lambda_rate);
  w.uint(static_cast<std::uint32_t>(ckpt.controller.rate_window.size()));
  for (double r : ckpt.controller.rate_window) w.f64(r);

  w.uint(ckpt.step);
  w.uint(ckpt.tasks_completed);

  w.uint(static_cast<std::uint32_t>(ckpt.rngs.size()));
  for (const auto& [name, rng] : ckpt.rngs) {
    std::ostringstream state;
    state << rng;
    w.str(name);
    w.str(state.str());
  }

  w.u8(ckpt.replay ? 1 : 0);
  if (ckpt.replay) {
    const auto& buf = *ckpt.replay;
    w.uint(static_cast<std::uint64_t>(buf.capacity()));
    w.uint(static_cast<std::uint32_t>(buf.num_classes()));
    for (std::size_t c = 0; c < buf.num_classes(); ++c) {
      const int label = static_cast<int>(c);
      w.uint(buf.seen(label));
      const auto& items = buf.items(label);
      w.uint(static_cast<std::uint32_t>(items.size()));
      for (const auto& item : items) {
        w.uint(static_cast<std::uint64_t>(item.sample_id));
        w.uint(static_cast<std::uint32_t>(item.label));
        w.u8(item.encoded ? 1 : 0);
        if (item.encoded) {
          w.uint(static_cast<std::uint32_t>(item.encoded->timesteps()));
          w.uint(static_cast<std::uint32_t>(item.encoded->units()));
          const auto data = item.encoded->data();
          w.raw(data.data(), data.size());
        }
      }
    }
  }
  return w.take();
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  if (const auto v = r.uint<std::uint32_t>(); v != kFormatVersion) {
    throw CheckpointError(fmt::format("unsupported checkpoint version {}", v));
  }
  NetworkDims dims;
  dims.input = r.uint<std::uint32_t>();
  dims.hidden = r.uint<std::uint32_t>();
  dims.output = r.uint<std::uint32_t>();
  LifParams lif;
  lif.learnable = r.u8() != 0;
  lif.slope = r.f64();
  Rng scratch;
  FcSnn net(dims, lif, scratch);
  std::vector<std::uint8_t> mask(dims.output);
  for (auto& a : mask) a = r.u8();
  net.set_active_mask(std::move(mask));
  r.tensors(net.mutable_params());

  auto opt = OptimizerState<float>::for_params(net.params());
  opt.config.learning_rate = r.f64();
  opt.config.beta1 = r.f64();
  opt.config.beta2 = r.f64();
  opt.config.epsilon = r.f64();
  opt.step = r.uint<std::uint64_t>();
  r.tensors(opt.first_moment);
  r.tensors(opt.second_moment);

  Checkpoint ckpt{std::move(net), std::move(opt), {}, {}, std::nullopt};
  ckpt.controller.lambda_rate = r.f64();
  const auto window = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < window; ++i) ckpt.controller.rate_window.push_back(r.f64());
  ckpt.step = r.uint<std::uint64_t>();
  ckpt.tasks_completed = r.uint<std::uint64_t>();

  const auto n_rngs = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_rngs; ++i) {
    auto name = r.str();
    std::istringstream state(r.str());
    Rng rng;
    state >> rng;
    if (!state) throw CheckpointError(fmt::format("rng '{}' state is corrupt", name));
    ckpt.rngs.emplace_back(std::move(name), rng);
  }

  if (r.u8() != 0) {
    const auto capacity = r.uint<std::uint64_t>();
    const auto classes = r.uint<std::uint32_t>();
    if (classes > (1u << 20)) throw CheckpointError("implausible replay class count");
    std::vector<std::vector<ReplayItem>> store(classes);
    std::vector<std::uint64_t> seen(classes);
    for (std::uint32_t c = 0; c < classes; ++c) {
      seen[c] = r.uint<std::uint64_t>();
      const auto n = r.uint<std::uint32_t>();
      for (std::uint32_t i = 0; i < n; ++i) {
        ReplayItem item;
        item.sample_id = r.uint<std::uint64_t>();
        item.label = static_cast<int>(r.uint<std::uint32_t>());
        if (r.u8() != 0) {
          const auto t_steps = r.uint<std::uint32_t>();
          const auto units = r.uint<std::uint32_t>();
          SpikeTensor encoded(t_steps, 1, units);
          const auto* data = r.take(std::size_t{t_steps} * units);
          for (std::uint32_t t = 0; t < t_steps; ++t) {
            auto row = encoded.row(t, 0);
            std::memcpy(row.data(), data + std::size_t{t} * units, units);
          }
          if (!encoded.is_binary()) throw CheckpointError("replay spike tensor is not binary");
          item.encoded = std::move(encoded);
        }
        store[c].push_back(std::move(item));
      }
    }
    try {
      ckpt.replay = ReplayBuffer::restore(capacity, std::move(store), std::move(seen));
    } catch (const ReplayError& e) {
      throw CheckpointError(std::string("replay buffer: ") + e.what());
    }
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return ckpt;
}

}  // namespace spikebudget
