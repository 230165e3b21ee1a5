#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace spikebudget {

/// Parameter groups of the fully-connected network, in checkpoint order.
enum ParamGroup : std::size_t { kW1, kB1, kW2, kB2, kBetaRaw, kVthrRaw, kNumParamGroups };

inline constexpr std::array<const char*, kNumParamGroups> kParamGroupNames = {
    "w1", "b1", "w2", "b2", "beta_raw", "vthr_raw"};

/// One flat tensor per parameter group. Used for parameters, gradients and
/// optimizer moments alike.
template <typename Real>
struct ParamTensors {
  std::array<std::vector<Real>, kNumParamGroups> groups;

  std::vector<Real>& operator[](ParamGroup g) { return groups[g]; }
  const std::vector<Real>& operator[](ParamGroup g) const { return groups[g]; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
  }

  ParamTensors zeros_like() const {
    ParamTensors out;
    for (std::size_t i = 0; i < groups.size(); ++i) out.groups[i].assign(groups[i].size(), Real(0));
    return out;
  }

  bool operator==(const ParamTensors&) const = default;
};

}  // namespace spikebudget
