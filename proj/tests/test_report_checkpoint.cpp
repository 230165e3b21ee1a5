#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spikebudget/checkpoint.hpp"
#include "spikebudget/report.hpp"
#include "test_support.hpp"

namespace spikebudget {
namespace {

using testing::to_matrix;

TEST(AccuracyCsv, Layout) {
  const auto m = to_matrix({{0.9}, {0.7, 0.9}});
  const std::string csv = accuracy_csv(m);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "after_task,task_1,task_2");
  std::string row1;
  std::getline(in, row1);
  EXPECT_EQ(row1.substr(0, 2), "1,");
  EXPECT_EQ(row1.back(), ',');  // empty cell above the diagonal
}

TEST(AccuracyCsv, RoundTripIsExact) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = to_matrix(testing::random_triangle(rng, 1 + rng() % 6));
    EXPECT_EQ(parse_accuracy_csv(accuracy_csv(m)), m);
  }
}

TEST(AccuracyCsv, StrictParsing) {
  const char* bad[] = {
      "",
      "task,task_1\n1,0.5\n",
      "after_task,task_2\n1,0.5\n",
      "after_task,task_1,task_2\n1,0.5,\n",
      "after_task,task_1\n1,0.5,0.1\n",
      "after_task,task_1\n2,0.5\n",
      "after_task,task_1,task_2\n1,0.5,0.4\n2,0.4,0.5\n",
      "after_task,task_1\n1,abc\n",
      "after_task,task_1\n1,1.5\n",
  };
  for (const char* text : bad) EXPECT_THROW(parse_accuracy_csv(text), ContinualError) << text;
}

RunResult sample_result() {
  RunResult r;
  r.config.seed = 7;
  r.config.config = ConfigId::kC3;
  r.accuracy = to_matrix({{0.9}, {0.7, 0.9}});
  r.acc = 0.8;
  r.forgetting = 0.2;
  r.bwt = -0.2;
  r.mean_spike_rate = 0.12;
  r.budget_log = {{0, 0, 0.2, 0.2, 0.0, 0.0, 1.5}, {1, 1, 0.1, 0.15, 0.01, 0.0001, 1.2}};
  r.wall_seconds = 123.0;
  return r;
}

TEST(ResultJson, StableAndWithoutWallTime) {
  auto r = sample_result();
  const auto a = run_result_json(r);
  r.wall_seconds = 1.0;
  EXPECT_EQ(a, run_result_json(r));
  const auto doc = nlohmann::json::parse(a);
  EXPECT_EQ(doc["seed"], 7);
  EXPECT_EQ(doc["config"]["config"], "C3");
  EXPECT_EQ(doc["config"]["scheduler"], true);
  EXPECT_EQ(doc["config"]["learnable_lif"], false);
  EXPECT_EQ(doc["metrics"]["acc"], 0.8);
  EXPECT_EQ(doc["metrics"]["steps"], 2);
  EXPECT_EQ(doc["accuracy_matrix"][1][0], 0.7);
  EXPECT_FALSE(doc.contains("wall_seconds"));
}

TEST(ResultJson, AbsentMetricsAreNull) {
  auto r = sample_result();
  r.forgetting.reset();
  r.bwt.reset();
  const auto doc = nlohmann::json::parse(run_result_json(r));
  EXPECT_TRUE(doc["metrics"]["forgetting"].is_null());
  EXPECT_TRUE(doc["metrics"]["bwt"].is_null());
}

TEST(Artifacts, WritesThreeFiles) {
  const auto dir = testing::scratch_dir("artifacts");
  const auto paths = write_run_artifacts(dir / "nested", sample_result());
  for (const auto& p : {paths.json, paths.accuracy_csv, paths.budget_csv}) {
    EXPECT_TRUE(std::filesystem::exists(p)) << p;
  }
  std::ifstream in(paths.budget_csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 3);
  std::ifstream acc(paths.accuracy_csv);
  std::stringstream text;
  text << acc.rdbuf();
  EXPECT_EQ(parse_accuracy_csv(text.str()), sample_result().accuracy);
}

Checkpoint captured_checkpoint() {
  RunConfig cfg;
  cfg.config = ConfigId::kC4;
  cfg.epochs_per_task = 1;
  cfg.batch_size = 8;
  cfg.timesteps = 4;
  cfg.hidden = 8;
  cfg.buffer_capacity = 12;
  cfg.replay_reencode = false;
  const auto data = make_dataset(testing::banded_frames(4, 12, 4, 8), {}, 4, 8, 4);
  std::optional<Checkpoint> last;
  run_config(cfg, data, TaskSchedule::parse("2x2"), {}, [&](const Checkpoint& c) { last = c; });
  return *last;
}

void expect_same(const Checkpoint& a, const Checkpoint& b) {
  EXPECT_EQ(a.net.dims(), b.net.dims());
  EXPECT_EQ(a.net.params(), b.net.params());
  EXPECT_EQ(a.net.lif_learnable(), b.net.lif_learnable());
  EXPECT_EQ(a.net.surrogate_slope(), b.net.surrogate_slope());
  EXPECT_TRUE(std::ranges::equal(a.net.active_mask(), b.net.active_mask()));
  EXPECT_EQ(a.optimizer.first_moment, b.optimizer.first_moment);
  EXPECT_EQ(a.optimizer.second_moment, b.optimizer.second_moment);
  EXPECT_EQ(a.optimizer.step, b.optimizer.step);
  EXPECT_EQ(a.optimizer.config.learning_rate, b.optimizer.config.learning_rate);
  EXPECT_EQ(a.controller, b.controller);
  EXPECT_EQ(a.rngs, b.rngs);
  EXPECT_EQ(a.replay, b.replay);
  EXPECT_EQ(a.step, b.step);
  EXPECT_EQ(a.tasks_completed, b.tasks_completed);
}

TEST(Checkpoint, RoundTrip) {
  const auto ckpt = captured_checkpoint();
  ASSERT_TRUE(ckpt.replay.has_value());
  EXPECT_FALSE(ckpt.replay->empty());
  const auto bytes = serialize_checkpoint(ckpt);
  const auto back = parse_checkpoint(bytes);
  expect_same(ckpt, back);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
}

TEST(Checkpoint, WithoutReplay) {
  auto ckpt = captured_checkpoint();
  ckpt.replay.reset();
  const auto back = parse_checkpoint(serialize_checkpoint(ckpt));
  EXPECT_FALSE(back.replay.has_value());
}

TEST(Checkpoint, RejectsCorruption) {
  const auto bytes = serialize_checkpoint(captured_checkpoint());
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xff;
  EXPECT_THROW(parse_checkpoint(bad_magic), CheckpointError);
  auto bad_version = bytes;
  bad_version[8] = 99;
  EXPECT_THROW(parse_checkpoint(bad_version), CheckpointError);
  for (std::size_t cut : {std::size_t{0}, std::size_t{7}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(parse_checkpoint(std::span(bytes).first(cut)), CheckpointError) << cut;
  }
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(parse_checkpoint(trailing), CheckpointError);
}

}  // namespace
}  // namespace spikebudget
