#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikebudget/budget.hpp"
#include "spikebudget/network.hpp"
#include "spikebudget/optimizer.hpp"
#include "spikebudget/replay.hpp"

namespace spikebudget {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to resume training.
///
/// On disk (little-endian): "SPKCKPT1", u32 format version, u32 input/hidden/
/// output, u8 lif_learnable, f64 surrogate slope, active-class bytes, then
/// each parameter group in ParamGroup order as {u32 name length, name, u64
/// count, count x f32}. Adam hyperparameters (f64), u64 step and both moment
/// sets follow in the same group order, then the controller, the named rng
/// streams (textual engine state) and an optional replay buffer.
struct Checkpoint {
  FcSnn net;
  OptimizerState<float> optimizer;
  BudgetControllerState controller;
  std::vector<std::pair<std::string, Rng>> rngs;
  std::optional<ReplayBuffer> replay;
  std::uint64_t step = 0;
  std::uint64_t tasks_completed = 0;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace spikebudget
