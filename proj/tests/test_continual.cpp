#include <gtest/gtest.h>

#include <set>

#include "spikebudget/continual.hpp"
#include "test_support.hpp"

namespace spikebudget {
namespace {

using testing::banded_frames;
using testing::brute_acc;
using testing::brute_bwt;
using testing::brute_forgetting;
using testing::random_triangle;
using testing::to_matrix;

TEST(Ladder, ComponentFlags) {
  EXPECT_EQ(component_flags(ConfigId::kC0), (ComponentFlags{false, false, false}));
  EXPECT_EQ(component_flags(ConfigId::kC1), (ComponentFlags{true, false, false}));
  EXPECT_EQ(component_flags(ConfigId::kC2), (ComponentFlags{true, true, false}));
  EXPECT_EQ(component_flags(ConfigId::kC3), (ComponentFlags{true, false, true}));
  EXPECT_EQ(component_flags(ConfigId::kC4), (ComponentFlags{true, true, true}));
  for (auto id : {ConfigId::kC0, ConfigId::kC1, ConfigId::kC2, ConfigId::kC3, ConfigId::kC4}) {
    EXPECT_EQ(parse_config_id(to_string(id)), id);
  }
  EXPECT_THROW(parse_config_id("C5"), ContinualError);
}

TEST(Schedule, FiveByTwo) {
  const auto s = TaskSchedule::parse("5x2");
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s.task(0), (std::vector<int>{0, 1}));
  EXPECT_EQ(s.task(4), (std::vector<int>{8, 9}));
  EXPECT_EQ(s.num_classes(), 10u);
  EXPECT_EQ(s.task_of(7), 3u);
  EXPECT_FALSE(s.task_of(10).has_value());
}

TEST(Schedule, UnevenSplit) {
  const auto s = TaskSchedule::parse("4+4+3");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.task(2), (std::vector<int>{8, 9, 10}));
  EXPECT_EQ(s.num_classes(), 11u);
}

TEST(Schedule, RejectsMalformedAndOverlapping) {
  for (const char* bad : {"", "5x", "x2", "0x2", "3+0", "2+a", "5x2x1"}) {
    EXPECT_THROW(TaskSchedule::parse(bad), ContinualError) << bad;
  }
  EXPECT_THROW(TaskSchedule({{0, 1}, {1, 2}}), ContinualError);
  EXPECT_THROW(TaskSchedule({{0}, {}}), ContinualError);
}

TEST(Data, SplitTasksPartitionsByLabel) {
  Dataset data;
  data.train = banded_frames(4, 6, 4, 1);
  data.test = banded_frames(4, 3, 4, 2);
  data.num_classes = 4;
  const auto s = TaskSchedule::parse("2x2");
  const auto splits = split_tasks(data, s);
  ASSERT_EQ(splits.size(), 2u);
  std::set<std::size_t> seen;
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(splits[k].train.size(), 12u);
    EXPECT_EQ(splits[k].test.size(), 6u);
    EXPECT_TRUE(std::is_sorted(splits[k].train.begin(), splits[k].train.end()));
    for (std::size_t i : splits[k].train) {
      EXPECT_EQ(s.task_of(data.train[i].label), k);
      EXPECT_TRUE(seen.insert(i).second);
    }
  }
  EXPECT_EQ(seen.size(), data.train.size());
}

TEST(Data, MakeDatasetCarvesPerClass) {
  const auto frames = banded_frames(3, 10, 4, 3);
  const auto d = make_dataset(frames, {}, 3, 4, 2);
  EXPECT_EQ(d.train.size(), 12u);
  EXPECT_EQ(d.test.size(), 6u);
  std::vector<int> train_counts(3, 0);
  for (const auto& f : d.train) ++train_counts[f.label];
  EXPECT_EQ(train_counts, (std::vector<int>{4, 4, 4}));

  const auto separate = make_dataset(frames, banded_frames(3, 5, 4, 4), 3, 2, 5);
  EXPECT_EQ(separate.train.size(), 6u);
  EXPECT_EQ(separate.test.size(), 15u);
  EXPECT_EQ(make_dataset(frames, {}, 3, 0, 0).train.size(), 30u);
}

TEST(Metrics, WorkedThreeTaskExample) {
  const testing::Triangle a = {{0.9}, {0.8, 0.95}, {0.7, 0.8, 0.9}};
  const auto m = to_matrix(a);
  EXPECT_NEAR(acc_metric(m), 0.8, 1e-15);
  // Forgetting: ((0.9 - 0.7) + (0.95 - 0.8)) / 2; BWT: ((0.7 - 0.9) + (0.8 - 0.95)) / 2.
  EXPECT_NEAR(*forgetting_metric(m), 0.175, 1e-15);
  EXPECT_NEAR(*bwt_metric(m), -0.175, 1e-15);
}

TEST(Metrics, TwoTaskExample) {
  const auto m = to_matrix({{0.9}, {0.7, 0.9}});
  EXPECT_NEAR(acc_metric(m), 0.8, 1e-15);
  EXPECT_NEAR(*forgetting_metric(m), 0.2, 1e-15);
  EXPECT_NEAR(*bwt_metric(m), -0.2, 1e-15);
}

TEST(Metrics, ForgettingUsesPeakNotDiagonal) {
  // Task 0 improves after task 1, then drops.
  const auto m = to_matrix({{0.5}, {0.9, 0.8}, {0.6, 0.8, 0.7}});
  EXPECT_NEAR(*forgetting_metric(m), (0.3 + 0.0) / 2.0, 1e-15);
  EXPECT_NEAR(*bwt_metric(m), (0.1 + 0.0) / 2.0, 1e-15);
}

TEST(Metrics, SingleTaskHasNoForgetting) {
  const auto m = to_matrix({{0.75}});
  EXPECT_EQ(acc_metric(m), 0.75);
  EXPECT_FALSE(forgetting_metric(m).has_value());
  EXPECT_FALSE(bwt_metric(m).has_value());
}

TEST(Metrics, MatchBruteForceBitwise) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t K = 1 + rng() % 6;
    const auto a = random_triangle(rng, K);
    const auto m = to_matrix(a);
    EXPECT_EQ(acc_metric(m), brute_acc(a));
    if (K > 1) {
      EXPECT_EQ(*forgetting_metric(m), brute_forgetting(a));
      EXPECT_EQ(*bwt_metric(m), brute_bwt(a));
      EXPECT_GE(*forgetting_metric(m), 0.0);
    }
  }
}

TEST(Metrics, IncompleteMatrixRejected) {
  AccuracyMatrix m(2);
  m.set(0, 0, 0.5);
  EXPECT_FALSE(m.complete());
  EXPECT_THROW(acc_metric(m), ContinualError);
  EXPECT_THROW(m.set(0, 1, 0.5), ContinualError);
  EXPECT_THROW(m.set(1, 0, 1.5), ContinualError);
  EXPECT_FALSE(m.has(1, 1));
}

TEST(Eval, PooledAndPerTaskAccuracy) {
  EvalCounts c;
  c.correct = {9, 1, 5, 0};
  c.total = {10, 10, 5, 0};
  EXPECT_NEAR(c.accuracy(), 15.0 / 25.0, 1e-15);
  EXPECT_NEAR(c.accuracy_over({0, 1}), 0.5, 1e-15);
  EXPECT_NEAR(c.accuracy_over({2}), 1.0, 1e-15);
  // Class-count weighted, not a mean of per-class accuracies.
  EXPECT_NEAR(c.accuracy_over({1, 2}), 6.0 / 15.0, 1e-15);
}

struct TinyRun {
  Dataset data;
  TaskSchedule schedule;
  RunConfig cfg;
};

TinyRun tiny_run(ConfigId id) {
  TinyRun t;
  t.data = make_dataset(banded_frames(4, 30, 6, 5), {}, 4, 20, 10);
  t.data.num_classes = 4;
  t.schedule = TaskSchedule::parse("2x2");
  t.cfg.config = id;
  t.cfg.epochs_per_task = 2;
  t.cfg.batch_size = 8;
  t.cfg.timesteps = 6;
  t.cfg.hidden = 16;
  t.cfg.buffer_capacity = 20;
  t.cfg.learning_rate = 5e-3;
  t.cfg.seed = 9;
  return t;
}

RunResult run(const TinyRun& t) { return run_config(t.cfg, t.data, t.schedule); }

TEST(RunConfig, ProducesCompleteMatrixAndLog) {
  const auto t = tiny_run(ConfigId::kC4);
  const auto r = run(t);
  EXPECT_TRUE(r.accuracy.complete());
  EXPECT_EQ(r.accuracy.tasks(), 2u);
  ASSERT_TRUE(r.forgetting.has_value());
  ASSERT_TRUE(r.bwt.has_value());
  // 40 samples per task in batches of 8, over 2 epochs and 2 tasks.
  EXPECT_EQ(r.budget_log.size(), 20u);
  double sum = 0.0;
  for (std::size_t i = 0; i < r.budget_log.size(); ++i) {
    EXPECT_EQ(r.budget_log[i].step, i);
    EXPECT_EQ(r.budget_log[i].task, i / 10);
    sum += r.budget_log[i].r_batch;
  }
  EXPECT_DOUBLE_EQ(r.mean_spike_rate, sum / 20.0);
  EXPECT_GT(r.acc, 0.5);
}

TEST(RunConfig, Deterministic) {
  const auto t = tiny_run(ConfigId::kC4);
  const auto a = run(t);
  const auto b = run(t);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.budget_log, b.budget_log);
  EXPECT_EQ(a.final_lambda, b.final_lambda);
}

TEST(RunConfig, SeedChangesTrajectory) {
  auto t = tiny_run(ConfigId::kC1);
  const auto a = run(t);
  t.cfg.seed = 10;
  EXPECT_NE(a.budget_log, run(t).budget_log);
}

TEST(RunConfig, NoSchedulerKeepsLambdaAtZero) {
  for (auto id : {ConfigId::kC0, ConfigId::kC1, ConfigId::kC2}) {
    const auto r = run(tiny_run(id));
    for (const auto& e : r.budget_log) {
      EXPECT_EQ(e.lambda_rate, 0.0);
      EXPECT_EQ(e.penalty, 0.0);
    }
    EXPECT_EQ(r.final_lambda, 0.0);
  }
}

TEST(RunConfig, FixedLifLeavesCarriersUntouched) {
  for (auto id : {ConfigId::kC0, ConfigId::kC1, ConfigId::kC3}) {
    const auto r = run(tiny_run(id));
    EXPECT_EQ(r.lif_final.beta_raw, r.lif_initial.beta_raw);
    EXPECT_EQ(r.lif_final.vthr_raw, r.lif_initial.vthr_raw);
  }
  const auto learned = run(tiny_run(ConfigId::kC2));
  EXPECT_NE(learned.lif_final.beta_raw, learned.lif_initial.beta_raw);
}

TEST(RunConfig, SchedulerRaisesLambdaAboveTarget) {
  auto t = tiny_run(ConfigId::kC3);
  t.cfg.budget.r_target = 0.01;
  const auto r = run(t);
  EXPECT_GT(r.final_lambda, 0.0);
  // The logged lambda is the one in effect before the step's update.
  EXPECT_EQ(r.budget_log.front().lambda_rate, 0.0);
}

TEST(RunConfig, ReplayInsertionModesDiffer) {
  auto t = tiny_run(ConfigId::kC1);
  const auto final_epoch = run(t);
  t.cfg.replay_insertion = ReplayInsertion::kTaskEnd;
  const auto task_end = run(t);
  // The first epoch is identical; final_epoch starts filling the buffer
  // during task 1's last epoch, task_end only after it.
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(final_epoch.budget_log[i], task_end.budget_log[i]);
  EXPECT_NE(final_epoch.budget_log, task_end.budget_log);
  EXPECT_EQ(parse_replay_insertion(to_string(ReplayInsertion::kTaskEnd)), ReplayInsertion::kTaskEnd);
  EXPECT_THROW(parse_replay_insertion("later"), ContinualError);
}

TEST(RunConfig, SingleTask) {
  auto t = tiny_run(ConfigId::kC1);
  t.schedule = TaskSchedule({{0, 1, 2, 3}});
  const auto r = run(t);
  EXPECT_EQ(r.accuracy.tasks(), 1u);
  EXPECT_FALSE(r.forgetting.has_value());
  EXPECT_FALSE(r.bwt.has_value());
}

TEST(RunConfig, CheckpointCallbackPerTask) {
  const auto t = tiny_run(ConfigId::kC4);
  std::vector<std::uint64_t> completed;
  run_config(t.cfg, t.data, t.schedule, {}, [&](const Checkpoint& c) {
    completed.push_back(c.tasks_completed);
    EXPECT_TRUE(c.replay.has_value());
  });
  EXPECT_EQ(completed, (std::vector<std::uint64_t>{1, 2}));
}

TEST(RunConfig, InvalidSettingsRejected) {
  auto t = tiny_run(ConfigId::kC1);
  t.cfg.batch_size = 0;
  EXPECT_THROW(run(t), ContinualError);
  t = tiny_run(ConfigId::kC1);
  t.schedule = TaskSchedule::parse("3x2");
  EXPECT_THROW(run(t), ContinualError);
}

TEST(Rng, DerivedStreamsAreIndependentAndStable) {
  auto a = derive_rng(42, 1);
  auto b = derive_rng(42, 2);
  auto c = derive_rng(42, 1);
  const auto first = a();
  EXPECT_NE(first, b());
  EXPECT_EQ(first, c());
}

}  // namespace
}  // namespace spikebudget
