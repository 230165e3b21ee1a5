#include "spikebudget/continual.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "spikebudget/optimizer.hpp"
#include "spikebudget/replay.hpp"

namespace spikebudget {

ComponentFlags component_flags(ConfigId id) {
  switch (id) {
    case ConfigId::kC0: return {false, false, false};
    case ConfigId::kC1: return {true, false, false};
    case ConfigId::kC2: return {true, true, false};
    case ConfigId::kC3: return {true, false, true};
    case ConfigId::kC4: return {true, true, true};
  }
  throw ContinualError("unknown configuration id");
}

std::string to_string(ConfigId id) {
  return fmt::format("C{}", static_cast<int>(id));
}

ConfigId parse_config_id(std::string_view text) {
  if (text.size() == 2 && (text[0] == 'C' || text[0] == 'c') && text[1] >= '0' && text[1] <= '4') {
    return static_cast<ConfigId>(text[1] - '0');
  }
  throw ContinualError(fmt::format("unknown configuration '{}' (expected C0..C4)", text));
}

std::string to_string(ReplayInsertion timing) {
  return timing == ReplayInsertion::kFinalEpoch ? "final_epoch" : "task_end";
}

ReplayInsertion parse_replay_insertion(std::string_view text) {
  if (text == "final_epoch") return ReplayInsertion::kFinalEpoch;
  if (text == "task_end") return ReplayInsertion::kTaskEnd;
  throw ContinualError(fmt::format("unknown replay insertion '{}' (expected final_epoch or task_end)", text));
}

// ---------------------------------------------------------------------------

TaskSchedule::TaskSchedule(std::vector<std::vector<int>> tasks) : tasks_(std::move(tasks)) {
  if (tasks_.empty()) throw ContinualError("task schedule is empty");
  std::set<int> seen;
  for (std::size_t k = 0; k < tasks_.size(); ++k) {
    if (tasks_[k].empty()) throw ContinualError(fmt::format("task {} has no classes", k + 1));
    for (int c : tasks_[k]) {
      if (c < 0) throw ContinualError(fmt::format("negative class {} in task {}", c, k + 1));
      if (!seen.insert(c).second) {
        throw ContinualError(fmt::format("class {} appears in more than one task", c));
      }
    }
  }
}

namespace {

std::size_t parse_count(std::string_view text, std::string_view whole) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || value == 0) {
    throw ContinualError(fmt::format("malformed task schedule '{}'", whole));
  }
  return value;
}

}  // namespace

TaskSchedule TaskSchedule::parse(std::string_view spec) {
  std::vector<std::size_t> sizes;
  if (const auto x = spec.find_first_of("xX"); x != std::string_view::npos) {
    const std::size_t tasks = parse_count(spec.substr(0, x), spec);
    const std::size_t per_task = parse_count(spec.substr(x + 1), spec);
    sizes.assign(tasks, per_task);
  } else {
    std::size_t start = 0;
    for (;;) {
      const auto plus = spec.find('+', start);
      sizes.push_back(parse_count(spec.substr(start, plus - start), spec));
      if (plus == std::string_view::npos) break;
      start = plus + 1;
    }
  }
  std::vector<std::vector<int>> tasks;
  int next = 0;
  for (std::size_t n : sizes) {
    std::vector<int> classes(n);
    std::iota(classes.begin(), classes.end(), next);
    next += static_cast<int>(n);
    tasks.push_back(std::move(classes));
  }
  return TaskSchedule(std::move(tasks));
}

std::size_t TaskSchedule::num_classes() const {
  int max_class = -1;
  for (const auto& t : tasks_) max_class = std::max(max_class, *std::max_element(t.begin(), t.end()));
  return static_cast<std::size_t>(max_class + 1);
}

std::optional<std::size_t> TaskSchedule::task_of(int label) const {
  for (std::size_t k = 0; k < tasks_.size(); ++k) {
    if (std::find(tasks_[k].begin(), tasks_[k].end(), label) != tasks_[k].end()) return k;
  }
  return std::nullopt;
}

Dataset make_dataset(const std::vector<FrameImage>& train, const std::vector<FrameImage>& test,
                     std::size_t num_classes, std::size_t train_per_class,
                     std::size_t test_per_class) {
  Dataset out;
  out.num_classes = num_classes;
  auto check_label = [num_classes](const FrameImage& f) {
    if (f.label < 0 || static_cast<std::size_t>(f.label) >= num_classes) {
      throw ContinualError(fmt::format("label {} outside [0, {})", f.label, num_classes));
    }
    return static_cast<std::size_t>(f.label);
  };
  std::vector<std::size_t> taken(num_classes, 0);
  std::vector<std::size_t> carved(num_classes, 0);
  for (const auto& f : train) {
    const std::size_t c = check_label(f);
    if (train_per_class == 0 || taken[c] < train_per_class) {
      ++taken[c];
      out.train.push_back(f);
    } else if (test.empty() && (test_per_class == 0 || carved[c] < test_per_class)) {
      ++carved[c];
      out.test.push_back(f);
    }
  }
  if (!test.empty()) {
    std::fill(carved.begin(), carved.end(), 0);
    for (const auto& f : test) {
      const std::size_t c = check_label(f);
      if (test_per_class == 0 || carved[c] < test_per_class) {
        ++carved[c];
        out.test.push_back(f);
      }
    }
  }
  return out;
}

std::vector<TaskSplit> split_tasks(const Dataset& data, const TaskSchedule& schedule) {
  std::vector<TaskSplit> splits(schedule.size());
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    if (const auto k = schedule.task_of(data.train[i].label)) splits[*k].train.push_back(i);
  }
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    if (const auto k = schedule.task_of(data.test[i].label)) splits[*k].test.push_back(i);
  }
  return splits;
}

// ---------------------------------------------------------------------------

AccuracyMatrix::AccuracyMatrix(std::size_t tasks)
    : tasks_(tasks), values_(tasks * tasks, 0.0), set_(tasks * tasks, 0) {}

std::size_t AccuracyMatrix::index(std::size_t j, std::size_t k) const {
  if (j >= tasks_ || k > j) {
    throw ContinualError(fmt::format("accuracy entry ({}, {}) outside the lower triangle of {}", j,
                                     k, tasks_));
  }
  return j * tasks_ + k;
}

void AccuracyMatrix::set(std::size_t j, std::size_t k, double accuracy) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
    throw ContinualError(fmt::format("accuracy {} outside [0, 1]", accuracy));
  }
  const auto i = index(j, k);
  values_[i] = accuracy;
  set_[i] = 1;
}

double AccuracyMatrix::at(std::size_t j, std::size_t k) const {
  const auto i = index(j, k);
  if (!set_[i]) throw ContinualError(fmt::format("accuracy entry ({}, {}) not recorded", j, k));
  return values_[i];
}

bool AccuracyMatrix::has(std::size_t j, std::size_t k) const {
  return j < tasks_ && k <= j && set_[j * tasks_ + k];
}

bool AccuracyMatrix::complete() const {
  for (std::size_t j = 0; j < tasks_; ++j) {
    for (std::size_t k = 0; k <= j; ++k) {
      if (!set_[j * tasks_ + k]) return false;
    }
  }
  return true;
}

namespace {

void require_complete(const AccuracyMatrix& a) {
  if (a.tasks() == 0 || !a.complete()) throw ContinualError("accuracy matrix is incomplete");
}

}  // namespace

double acc_metric(const AccuracyMatrix& a) {
  require_complete(a);
  const std::size_t last = a.tasks() - 1;
  double sum = 0.0;
  for (std::size_t k = 0; k <= last; ++k) sum += a.at(last, k);
  return sum / static_cast<double>(a.tasks());
}

std::optional<double> forgetting_metric(const AccuracyMatrix& a) {
  require_complete(a);
  if (a.tasks() < 2) return std::nullopt;
  const std::size_t last = a.tasks() - 1;
  double sum = 0.0;
  for (std::size_t k = 0; k < last; ++k) {
    double best = a.at(k, k);
    for (std::size_t j = k + 1; j <= last; ++j) best = std::max(best, a.at(j, k));
    sum += best - a.at(last, k);
  }
  return sum / static_cast<double>(last);
}

std::optional<double> bwt_metric(const AccuracyMatrix& a) {
  require_complete(a);
  if (a.tasks() < 2) return std::nullopt;
  const std::size_t last = a.tasks() - 1;
  double sum = 0.0;
  for (std::size_t k = 0; k < last; ++k) sum += a.at(last, k) - a.at(k, k);
  return sum / static_cast<double>(last);
}

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (epochs_per_task == 0) throw ContinualError("epochs_per_task must be >= 1");
  if (batch_size == 0) throw ContinualError("batch_size must be >= 1");
  if (timesteps == 0) throw ContinualError("timesteps must be >= 1");
  if (hidden == 0) throw ContinualError("hidden must be >= 1");
  if (!(learning_rate > 0.0)) throw ContinualError("learning_rate must be positive");
  if (!(max_grad_norm > 0.0)) throw ContinualError("max_grad_norm must be positive");
  if (!(replay_ratio >= 0.0)) throw ContinualError("replay_ratio must be non-negative");
  budget.validate();
  // Throws on out-of-range beta / threshold.
  LifParams::from_constrained(beta_init, vthr_init, false, surrogate_slope);
}

double EvalCounts::accuracy() const {
  const auto c = std::accumulate(correct.begin(), correct.end(), std::size_t{0});
  const auto t = std::accumulate(total.begin(), total.end(), std::size_t{0});
  return t == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(t);
}

double EvalCounts::accuracy_over(const std::vector<int>& classes) const {
  std::size_t c = 0;
  std::size_t t = 0;
  for (int label : classes) {
    c += correct.at(static_cast<std::size_t>(label));
    t += total.at(static_cast<std::size_t>(label));
  }
  return t == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(t);
}

Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

namespace {

enum RngStream : std::uint64_t { kInitStream = 1, kShuffleStream, kEncodeStream, kReplayStream, kEvalStream };

SpikeTensor encode_batch(const std::vector<ReplayItem>& batch, const std::vector<FrameImage>& images,
                         std::size_t timesteps, Rng& rng) {
  std::vector<SpikeTensor> encoded;
  encoded.reserve(batch.size());
  for (const auto& item : batch) {
    if (item.encoded) {
      encoded.push_back(*item.encoded);
    } else {
      encoded.push_back(poisson_encode(images.at(item.sample_id), timesteps, rng));
    }
  }
  return SpikeTensor::stack(encoded);
}

}  // namespace

EvalCounts evaluate(const FcSnn& net, const std::vector<FrameImage>& images,
                    const std::vector<std::size_t>& indices, std::size_t timesteps,
                    std::uint64_t encode_seed, std::size_t batch_size) {
  EvalCounts counts;
  counts.correct.assign(net.dims().output, 0);
  counts.total.assign(net.dims().output, 0);
  Rng rng(encode_seed);
  std::vector<SpikeTensor> encoded;
  std::vector<int> labels;
  auto flush = [&] {
    if (encoded.empty()) return;
    const auto record = net.forward(SpikeTensor::stack(encoded));
    const auto predicted = net.predict(record);
    for (std::size_t b = 0; b < labels.size(); ++b) {
      const auto y = static_cast<std::size_t>(labels[b]);
      ++counts.total.at(y);
      if (predicted[b] == labels[b]) ++counts.correct[y];
    }
    encoded.clear();
    labels.clear();
  };
  for (std::size_t idx : indices) {
    const auto& image = images.at(idx);
    encoded.push_back(poisson_encode(image, timesteps, rng));
    labels.push_back(image.label);
    if (encoded.size() == batch_size) flush();
  }
  flush();
  return counts;
}

RunResult run_config(const RunConfig& cfg, const Dataset& data, const TaskSchedule& schedule,
                     const ProgressFn& progress, const CheckpointFn& on_task_end) {
  cfg.validate();
  if (data.train.empty()) throw ContinualError("training set is empty");
  if (schedule.num_classes() > data.num_classes) {
    throw ContinualError("task schedule references classes beyond the dataset");
  }
  const auto started = std::chrono::steady_clock::now();
  const ComponentFlags flags = cfg.flags();
  const auto splits = split_tasks(data, schedule);

  Rng init_rng = derive_rng(cfg.seed, kInitStream);
  Rng shuffle_rng = derive_rng(cfg.seed, kShuffleStream);
  Rng encode_rng = derive_rng(cfg.seed, kEncodeStream);
  Rng replay_rng = derive_rng(cfg.seed, kReplayStream);
  const std::uint64_t eval_seed = derive_rng(cfg.seed, kEvalStream)();

  const NetworkDims dims{data.train.front().pixels.size(), cfg.hidden, data.num_classes};
  const LifParams lif =
      LifParams::from_constrained(cfg.beta_init, cfg.vthr_init, flags.learnable_lif, cfg.surrogate_slope);
  FcSnn net(dims, lif, init_rng);
  auto opt = OptimizerState<float>::for_params(net.params(), AdamConfig{cfg.learning_rate});
  ReplayBuffer buffer(cfg.buffer_capacity, data.num_classes);
  BudgetControllerState controller;

  RunResult result;
  result.config = cfg;
  result.accuracy = AccuracyMatrix(schedule.size());
  result.lif_initial = net.lif_params();

  auto insert_samples = [&](std::span<const std::size_t> indices) {
    for (std::size_t idx : indices) {
      ReplayItem item{idx, data.train[idx].label, std::nullopt};
      if (!cfg.replay_reencode) item.encoded = poisson_encode(data.train[idx], cfg.timesteps, encode_rng);
      buffer.insert(std::move(item), replay_rng);
    }
  };

  std::uint64_t step = 0;
  for (std::size_t j = 0; j < schedule.size(); ++j) {
    for (int c : schedule.task(j)) net.activate_class(c);
    std::vector<std::size_t> order = splits[j].train;
    if (order.empty()) throw ContinualError(fmt::format("task {} has no training samples", j + 1));

    for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
        std::vector<ReplayItem> batch;
        batch.reserve(2 * (stop - start));
        for (std::size_t i = start; i < stop; ++i) {
          batch.push_back({order[i], data.train[order[i]].label, std::nullopt});
        }
        if (flags.replay) batch = compose_batch(std::move(batch), buffer, replay_rng, cfg.replay_ratio);

        std::vector<int> labels;
        labels.reserve(batch.size());
        for (const auto& item : batch) labels.push_back(item.label);

        const auto record = net.forward(encode_batch(batch, data.train, cfg.timesteps, encode_rng));
        const double r_batch = spike_rate(record.hidden_spikes());
        const double task = task_loss<float>(record.logits, dims.output, labels, net.active_mask());
        const double lambda_used = controller.lambda_rate;
        const BudgetPenalty penalty = flags.scheduler
                                          ? budget_penalty(r_batch, cfg.budget.r_target, lambda_used)
                                          : BudgetPenalty{};
        const double loss = task + penalty.value;
        if (!std::isfinite(loss)) {
          throw ContinualError(fmt::format(
              "non-finite loss at step {} (task {}, epoch {}): task loss {}, penalty {}, rate {}",
              step, j + 1, epoch + 1, task, penalty.value, r_batch));
        }

        auto grads = net.backward(record, labels, penalty.d_rate);
        clip_gradients(grads, cfg.max_grad_norm);
        adam_step(net.mutable_params(), grads, opt);

        controller = flags.scheduler ? controller_update(std::move(controller), cfg.budget, r_batch)
                                     : observe_rate(std::move(controller), cfg.budget, r_batch);
        result.budget_log.push_back(
            {step, j, r_batch, controller.window_mean(), lambda_used, penalty.value, loss});
        ++step;

        if (flags.replay && cfg.replay_insertion == ReplayInsertion::kFinalEpoch &&
            epoch + 1 == cfg.epochs_per_task) {
          insert_samples(std::span<const std::size_t>(order).subspan(start, stop - start));
        }
      }
    }

    if (flags.replay && cfg.replay_insertion == ReplayInsertion::kTaskEnd) {
      std::vector<std::size_t> stream = splits[j].train;
      std::shuffle(stream.begin(), stream.end(), replay_rng);
      insert_samples(stream);
    }

    std::vector<std::size_t> seen_test;
    for (std::size_t k = 0; k <= j; ++k) {
      seen_test.insert(seen_test.end(), splits[k].test.begin(), splits[k].test.end());
    }
    std::sort(seen_test.begin(), seen_test.end());
    const EvalCounts counts = evaluate(net, data.test, seen_test, cfg.timesteps, eval_seed);
    for (std::size_t k = 0; k <= j; ++k) {
      result.accuracy.set(j, k, counts.accuracy_over(schedule.task(k)));
    }
    if (progress) {
      std::string row;
      for (std::size_t k = 0; k <= j; ++k) row += fmt::format(" {:.3f}", result.accuracy.at(j, k));
      progress(fmt::format("{} seed {} task {}/{}: acc{} | pooled {:.3f} | lambda {:.3f}",
                           to_string(cfg.config), cfg.seed, j + 1, schedule.size(), row,
                           counts.accuracy(), controller.lambda_rate));
    }
    if (on_task_end) {
      Checkpoint ckpt{net, opt, controller,
                      {{"init", init_rng}, {"shuffle", shuffle_rng}, {"encode", encode_rng},
                       {"replay", replay_rng}},
                      flags.replay ? std::optional<ReplayBuffer>(buffer) : std::nullopt};
      ckpt.step = step;
      ckpt.tasks_completed = j + 1;
      on_task_end(ckpt);
    }
  }

  result.acc = acc_metric(result.accuracy);
  result.forgetting = forgetting_metric(result.accuracy);
  result.bwt = bwt_metric(result.accuracy);
  double rate_sum = 0.0;
  for (const auto& e : result.budget_log) rate_sum += e.r_batch;
  result.mean_spike_rate =
      result.budget_log.empty() ? 0.0 : rate_sum / static_cast<double>(result.budget_log.size());
  result.lif_final = net.lif_params();
  result.final_lambda = controller.lambda_rate;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace spikebudget
