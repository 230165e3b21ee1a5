#include "spikebudget/replay.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace spikebudget {

namespace {

std::size_t uniform_below(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng));
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t num_classes)
    : capacity_(capacity), store_(num_classes), seen_(num_classes, 0) {
  if (num_classes == 0) throw ReplayError("replay buffer needs at least one class");
  slots_per_class_ = capacity / num_classes;
}

std::size_t ReplayBuffer::size() const {
  std::size_t n = 0;
  for (const auto& c : store_) n += c.size();
  return n;
}

std::size_t ReplayBuffer::checked_class(int label) const {
  if (label < 0 || static_cast<std::size_t>(label) >= store_.size()) {
    throw ReplayError(fmt::format("label {} outside [0, {})", label, store_.size()));
  }
  return static_cast<std::size_t>(label);
}

const std::vector<ReplayItem>& ReplayBuffer::items(int label) const {
  return store_[checked_class(label)];
}

std::uint64_t ReplayBuffer::seen(int label) const { return seen_[checked_class(label)]; }

void ReplayBuffer::insert(ReplayItem item, Rng& rng) {
  const std::size_t c = checked_class(item.label);
  auto& slots = store_[c];
  const std::uint64_t seen = ++seen_[c];
  if (slots.size() < slots_per_class_) {
    slots.push_back(std::move(item));
    return;
  }
  // Reservoir: the new item survives with probability slots / seen.
  const std::uint64_t j = std::uniform_int_distribution<std::uint64_t>(0, seen - 1)(rng);
  if (j < slots_per_class_) slots[static_cast<std::size_t>(j)] = std::move(item);
}

const ReplayItem& ReplayBuffer::flat_at(std::size_t index) const {
  for (const auto& c : store_) {
    if (index < c.size()) return c[index];
    index -= c.size();
  }
  throw ReplayError("replay index out of range");
}

std::vector<ReplayItem> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<ReplayItem> out;
  if (n == 0) return out;
  const std::size_t stored = size();
  if (stored == 0) throw ReplayError("cannot sample from an empty replay buffer");
  out.reserve(n);
  if (n <= stored) {
    std::vector<std::size_t> order(stored);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + uniform_below(rng, stored - i);
      std::swap(order[i], order[j]);
      out.push_back(flat_at(order[i]));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out.push_back(flat_at(uniform_below(rng, stored)));
  }
  return out;
}

ReplayBuffer ReplayBuffer::restore(std::size_t capacity, std::vector<std::vector<ReplayItem>> store,
                                   std::vector<std::uint64_t> seen) {
  ReplayBuffer buffer(capacity, store.size());
  if (seen.size() != store.size()) throw ReplayError("restore: seen counts do not match classes");
  for (std::size_t c = 0; c < store.size(); ++c) {
    if (store[c].size() > buffer.slots_per_class_ || seen[c] < store[c].size()) {
      throw ReplayError(fmt::format("restore: class {} partition is inconsistent", c));
    }
    for (const auto& item : store[c]) {
      if (item.label != static_cast<int>(c)) throw ReplayError("restore: item filed under wrong class");
    }
  }
  buffer.store_ = std::move(store);
  buffer.seen_ = std::move(seen);
  return buffer;
}

std::vector<ReplayItem> compose_batch(std::vector<ReplayItem> current, const ReplayBuffer& buffer,
                                      Rng& rng, double replay_ratio) {
  if (!(replay_ratio >= 0.0)) throw ReplayError("replay ratio must be non-negative");
  const std::size_t stored = buffer.size();
  if (stored == 0 || current.empty()) return current;
  const auto wanted =
      static_cast<std::size_t>(std::llround(replay_ratio * static_cast<double>(current.size())));
  auto replayed = buffer.sample(std::min(wanted, stored), rng);
  current.insert(current.end(), std::make_move_iterator(replayed.begin()),
                 std::make_move_iterator(replayed.end()));
  return current;
}

}  // namespace spikebudget
