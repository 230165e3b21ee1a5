#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "spikebudget/encoding.hpp"

namespace spikebudget {

class ReplayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A training sample as it travels through batches and the replay memory.
/// `sample_id` indexes the owning dataset; `encoded` carries a frozen spike
/// tensor when the memory does not re-encode on sampling.
struct ReplayItem {
  std::size_t sample_id = 0;
  int label = 0;
  std::optional<SpikeTensor> encoded;

  bool operator==(const ReplayItem&) const = default;
};

/// Fixed-capacity episodic memory split into floor(capacity / classes) slots
/// per class. Each class partition is an independent reservoir, so after
/// saturation every class holds exactly slots_per_class items.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t num_classes);

  std::size_t capacity() const { return capacity_; }
  std::size_t num_classes() const { return store_.size(); }
  std::size_t slots_per_class() const { return slots_per_class_; }
  std::size_t size() const;
  bool empty() const { return size() == 0; }

  const std::vector<ReplayItem>& items(int label) const;
  std::uint64_t seen(int label) const;

  void insert(ReplayItem item, Rng& rng);

  /// n uniform draws over stored items: without replacement when n <= size(),
  /// otherwise with replacement.
  std::vector<ReplayItem> sample(std::size_t n, Rng& rng) const;

  /// Rebuild from serialized partitions (checkpoint restore).
  static ReplayBuffer restore(std::size_t capacity, std::vector<std::vector<ReplayItem>> store,
                              std::vector<std::uint64_t> seen);

  bool operator==(const ReplayBuffer&) const = default;

 private:
  std::size_t checked_class(int label) const;
  const ReplayItem& flat_at(std::size_t index) const;

  std::size_t capacity_ = 0;
  std::size_t slots_per_class_ = 0;
  std::vector<std::vector<ReplayItem>> store_;
  std::vector<std::uint64_t> seen_;
};

/// Current batch followed by round(replay_ratio * |current|) replayed items,
/// capped by the buffer's content. An empty buffer leaves the batch as is.
std::vector<ReplayItem> compose_batch(std::vector<ReplayItem> current, const ReplayBuffer& buffer,
                                      Rng& rng, double replay_ratio = 1.0);

}  // namespace spikebudget
