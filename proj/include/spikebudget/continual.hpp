#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spikebudget/budget.hpp"
#include "spikebudget/checkpoint.hpp"
#include "spikebudget/encoding.hpp"
#include "spikebudget/network.hpp"

namespace spikebudget {

class ContinualError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration ladder
// ---------------------------------------------------------------------------

enum class ConfigId { kC0, kC1, kC2, kC3, kC4 };

struct ComponentFlags {
  bool replay = false;
  bool learnable_lif = false;
  bool scheduler = false;

  bool operator==(const ComponentFlags&) const = default;
};

/// C0 naive, C1 +replay, C2 +learnable LIF, C3 +scheduler, C4 everything.
ComponentFlags component_flags(ConfigId id);
std::string to_string(ConfigId id);
ConfigId parse_config_id(std::string_view text);

// ---------------------------------------------------------------------------
// Tasks and data
// ---------------------------------------------------------------------------

/// Ordered, pairwise-disjoint class sets.
class TaskSchedule {
 public:
  TaskSchedule() = default;
  explicit TaskSchedule(std::vector<std::vector<int>> tasks);

  /// "5x2" (five tasks of two consecutive classes) or "4+4+3".
  static TaskSchedule parse(std::string_view spec);

  std::size_t size() const { return tasks_.size(); }
  const std::vector<int>& task(std::size_t k) const { return tasks_.at(k); }
  const std::vector<std::vector<int>>& tasks() const { return tasks_; }
  std::size_t num_classes() const;
  std::optional<std::size_t> task_of(int label) const;

 private:
  std::vector<std::vector<int>> tasks_;
};

struct Dataset {
  std::vector<FrameImage> train;
  std::vector<FrameImage> test;
  std::size_t num_classes = 10;
};

/// Take the first `train_per_class` images of each class as training data.
/// When `test` is empty the next `test_per_class` of each class form the test
/// split; otherwise the first `test_per_class` of each class in `test` do.
/// A quota of 0 keeps everything available.
Dataset make_dataset(const std::vector<FrameImage>& train, const std::vector<FrameImage>& test,
                     std::size_t num_classes, std::size_t train_per_class,
                     std::size_t test_per_class);

struct TaskSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Sample indices whose labels belong to each task, in dataset order.
std::vector<TaskSplit> split_tasks(const Dataset& data, const TaskSchedule& schedule);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// A[j][k]: accuracy on task k after training task j, defined for j >= k.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::size_t tasks);

  std::size_t tasks() const { return tasks_; }
  void set(std::size_t j, std::size_t k, double accuracy);
  double at(std::size_t j, std::size_t k) const;
  bool has(std::size_t j, std::size_t k) const;
  /// True when every lower-triangular entry is set.
  bool complete() const;

  bool operator==(const AccuracyMatrix&) const = default;

 private:
  std::size_t index(std::size_t j, std::size_t k) const;

  std::size_t tasks_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> set_;
};

/// Mean of the final row.
double acc_metric(const AccuracyMatrix& a);
/// Mean over k < K of (max_{j in [k, K]} A[j][k] - A[K][k]); absent when K = 1.
std::optional<double> forgetting_metric(const AccuracyMatrix& a);
/// Mean over k < K of (A[K][k] - A[k][k]); absent when K = 1.
std::optional<double> bwt_metric(const AccuracyMatrix& a);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// When finished-task samples enter the replay buffer. kFinalEpoch streams
/// each batch of the task's last epoch into the reservoirs after its update
/// step; kTaskEnd streams the whole task once after training on it.
enum class ReplayInsertion { kFinalEpoch, kTaskEnd };

std::string to_string(ReplayInsertion timing);
ReplayInsertion parse_replay_insertion(std::string_view text);

struct RunConfig {
  ConfigId config = ConfigId::kC4;
  std::size_t epochs_per_task = 5;
  std::size_t batch_size = 64;
  std::size_t timesteps = 25;
  std::size_t hidden = 128;
  double learning_rate = 1e-3;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 42;
  BudgetConfig budget;
  std::size_t buffer_capacity = 2000;
  bool replay_reencode = true;
  double replay_ratio = 1.0;
  ReplayInsertion replay_insertion = ReplayInsertion::kFinalEpoch;
  double beta_init = 0.9;
  double vthr_init = 1.0;
  double surrogate_slope = kDefaultSurrogateSlope;

  ComponentFlags flags() const { return component_flags(config); }
  void validate() const;
};

struct RunResult {
  RunConfig config;
  AccuracyMatrix accuracy;
  double acc = 0.0;
  std::optional<double> forgetting;
  std::optional<double> bwt;
  double mean_spike_rate = 0.0;
  std::vector<BudgetLogEntry> budget_log;
  LifParams lif_initial;
  LifParams lif_final;
  double final_lambda = 0.0;
  double wall_seconds = 0.0;
};

/// Per-class correct/total counts from one pass over `indices` of the test set.
struct EvalCounts {
  std::vector<std::size_t> correct;
  std::vector<std::size_t> total;

  double accuracy() const;
  double accuracy_over(const std::vector<int>& classes) const;
};

/// Poisson-encode the selected test images with a fresh stream from
/// `encode_seed` and classify them over the network's active classes.
EvalCounts evaluate(const FcSnn& net, const std::vector<FrameImage>& images,
                    const std::vector<std::size_t>& indices, std::size_t timesteps,
                    std::uint64_t encode_seed, std::size_t batch_size = 256);

using ProgressFn = std::function<void(const std::string&)>;
using CheckpointFn = std::function<void(const Checkpoint&)>;

/// Train the configuration through every task of the schedule, filling row j
/// of the accuracy matrix after task j. `on_task_end` receives the full
/// training state after each task's evaluation.
RunResult run_config(const RunConfig& cfg, const Dataset& data, const TaskSchedule& schedule,
                     const ProgressFn& progress = {}, const CheckpointFn& on_task_end = {});

/// Independent rng stream for (seed, purpose).
Rng derive_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace spikebudget
