#include "spikebudget/cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "spikebudget/encoding.hpp"
#include "spikebudget/gradcheck.hpp"
#include "spikebudget/report.hpp"

namespace spikebudget::cli {

namespace {

std::vector<FrameImage> load_frames(const ExperimentConfig& cfg, const std::string& images,
                                    const std::string& labels) {
  const auto image_bytes = read_file_bytes(cfg.resolve(images));
  const auto label_bytes = read_file_bytes(cfg.resolve(labels));
  return frames_from_idx(parse_idx(image_bytes), parse_idx(label_bytes));
}

std::string metric_or_na(const std::optional<double>& v) {
  return v ? fmt::format("{:.4f}", *v) : std::string("n/a");
}

std::string csv_cell(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

void write_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  write_file_bytes(dir / fmt::format("checkpoint_task{}.bin", ckpt.tasks_completed),
                   serialize_checkpoint(ckpt));
}

RunOutcome run_one(const ExperimentConfig& cfg, const Dataset& data, const TaskSchedule& schedule,
                   ConfigId id, std::uint64_t seed, std::ostream* log, std::mutex& log_mutex) {
  RunOutcome outcome;
  outcome.config = id;
  outcome.seed = seed;
  outcome.dir = cfg.out_dir / to_string(id) / fmt::format("seed_{}", seed);

  RunConfig run = cfg.run;
  run.config = id;
  run.seed = seed;
  ProgressFn progress;
  if (log != nullptr) {
    progress = [log, &log_mutex](const std::string& msg) {
      std::lock_guard lock(log_mutex);
      *log << msg << '\n' << std::flush;
    };
  }
  CheckpointFn on_task_end;
  if (cfg.checkpoints) {
    on_task_end = [&outcome](const Checkpoint& ckpt) { write_checkpoint(outcome.dir, ckpt); };
  }
  try {
    auto result = run_config(run, data, schedule, progress, on_task_end);
    write_run_artifacts(outcome.dir, result);
    outcome.result = std::move(result);
  } catch (const std::exception& e) {
    outcome.error = e.what();
  }
  return outcome;
}

}  // namespace

Dataset load_dataset(const ExperimentConfig& cfg) {
  cfg.check_files();
  const auto train = load_frames(cfg, cfg.train_images, cfg.train_labels);
  std::vector<FrameImage> test;
  if (!cfg.test_images.empty()) test = load_frames(cfg, cfg.test_images, cfg.test_labels);
  return make_dataset(train, test, cfg.num_classes, cfg.train_per_class, cfg.test_per_class);
}

std::string format_metrics(double acc, const std::optional<double>& forgetting,
                           const std::optional<double>& bwt) {
  return fmt::format("ACC={:.4f} F={} BWT={}", acc, metric_or_na(forgetting), metric_or_na(bwt));
}

std::string summary_line(const RunResult& r) {
  return fmt::format("{} seed={} {} spike={:.2f}%", to_string(r.config.config), r.config.seed,
                     format_metrics(r.acc, r.forgetting, r.bwt), 100.0 * r.mean_spike_rate);
}

std::vector<RunOutcome> run_experiment(const ExperimentConfig& cfg, const Dataset& data, bool parallel,
                                       std::ostream* log) {
  const TaskSchedule schedule = cfg.task_schedule();
  std::mutex log_mutex;
  const std::size_t n_configs = cfg.configs.size();
  std::vector<RunOutcome> outcomes(cfg.seeds.size() * n_configs);

  // Each worker owns one seed and writes only its own slice of `outcomes`.
  auto run_seed = [&](std::size_t s) {
    for (std::size_t c = 0; c < n_configs; ++c) {
      outcomes[c * cfg.seeds.size() + s] =
          run_one(cfg, data, schedule, cfg.configs[c], cfg.seeds[s], log, log_mutex);
    }
  };
  if (parallel && cfg.seeds.size() > 1) {
    std::vector<std::jthread> workers;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) workers.emplace_back(run_seed, s);
  } else {
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) run_seed(s);
  }
  return outcomes;
}

int cmd_run(const ExperimentConfig& cfg, bool parallel, std::ostream& out, std::ostream& err) {
  Dataset data;
  try {
    data = load_dataset(cfg);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  const auto outcomes = run_experiment(cfg, data, parallel, &err);

  std::string summary = "config,seed,acc,forgetting,bwt,mean_spike_rate,final_lambda\n";
  int status = 0;
  for (const auto& o : outcomes) {
    if (!o.result) {
      err << fmt::format("error: {} seed={} failed: {}\n", to_string(o.config), o.seed, o.error);
      status = 1;
      continue;
    }
    const auto& r = *o.result;
    out << summary_line(r) << '\n';
    summary += fmt::format("{},{},{},{},{},{},{}\n", to_string(o.config), o.seed, r.acc,
                           csv_cell(r.forgetting), csv_cell(r.bwt), r.mean_spike_rate, r.final_lambda);
  }
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream(cfg.out_dir / "summary.csv", std::ios::binary) << summary;
  return status;
}

int cmd_metrics(const std::filesystem::path& csv, std::ostream& out, std::ostream& err) {
  try {
    const auto bytes = read_file_bytes(csv);
    const auto matrix =
        parse_accuracy_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    if (!matrix.complete()) throw ContinualError("accuracy matrix has missing entries");
    out << format_metrics(acc_metric(matrix), forgetting_metric(matrix), bwt_metric(matrix)) << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << csv.string() << ": " << e.what() << '\n';
    return 1;
  }
}

void parse_size_spec(const std::string& spec, GradcheckOptions& opts) {
  std::vector<std::size_t> values;
  std::size_t start = 0;
  for (;;) {
    const auto comma = spec.find(',', start);
    const std::string field = spec.substr(start, comma - start);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() || v == 0) {
      throw std::invalid_argument(fmt::format("size spec '{}': '{}' is not a positive integer", spec, field));
    }
    values.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (values.size() != 5) {
    throw std::invalid_argument(fmt::format("size spec '{}': expected IN,HIDDEN,OUT,T,BATCH", spec));
  }
  opts.input = values[0];
  opts.hidden = values[1];
  opts.output = values[2];
  opts.timesteps = values[3];
  opts.batch = values[4];
}

int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out) {
  double worst = 0.0;
  for (std::size_t i = 0; i < opts.nets; ++i) {
    GradcheckSpec spec{opts.input, opts.hidden, opts.output, opts.timesteps, opts.batch, opts.seed + i};
    const auto report = run_gradcheck(spec);
    std::string groups;
    for (std::size_t g = 0; g < kNumParamGroups; ++g) {
      groups += fmt::format(" {}={:.2e}", kParamGroupNames[g], report.max_rel_error[g]);
    }
    out << fmt::format("net {:>3} seed={} {}{}\n", i, spec.seed,
                       report.worst <= opts.tolerance ? "ok  " : "FAIL", groups);
    worst = std::max(worst, report.worst);
  }
  const bool pass = worst <= opts.tolerance;
  out << fmt::format("gradcheck {}: {} nets, worst relative error {:.3e} (tolerance {:.1e})\n",
                     pass ? "PASS" : "FAIL", opts.nets, worst, opts.tolerance);
  return pass ? 0 : 1;
}

int cmd_encode(const EncodeOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    switch (opts.source) {
      case EncodeOptions::Source::kSynthetic: {
        Rng rng(opts.seed);
        EventStream stream{opts.width, opts.height,
                           synth_event_stream(rng, opts.width, opts.height, opts.duration_us, opts.rate_hz)};
        write_file_bytes(opts.output, write_event_file(stream));
        out << fmt::format("wrote {} events ({}x{}) to {}\n", stream.events.size(), opts.width, opts.height,
                           opts.output.string());
        return 0;
      }
      case EncodeOptions::Source::kNmnist: {
        EventStream stream{opts.width, opts.height, parse_nmnist(read_file_bytes(opts.input))};
        std::stable_sort(stream.events.begin(), stream.events.end(),
                         [](const EventRecord& a, const EventRecord& b) { return a.t_us < b.t_us; });
        write_file_bytes(opts.output, write_event_file(stream));
        out << fmt::format("wrote {} events to {}\n", stream.events.size(), opts.output.string());
        return 0;
      }
      case EncodeOptions::Source::kIdx: {
        const auto images = parse_idx(read_file_bytes(opts.input));
        IdxArray labels;
        if (!opts.labels.empty()) {
          labels = parse_idx(read_file_bytes(opts.labels));
        } else {
          labels.dims = {images.dims.empty() ? 0u : images.dims[0]};
          labels.data.assign(labels.dims[0], 0);
        }
        const auto frames = frames_from_idx(images, labels);
        if (opts.index >= frames.size()) {
          throw std::out_of_range(fmt::format("image index {} outside [0, {})", opts.index, frames.size()));
        }
        const auto& frame = frames[opts.index];
        Rng rng(opts.seed);
        const auto spikes = poisson_encode(frame, opts.timesteps, rng);
        // One line per timestep, one character per pixel.
        std::string dump = fmt::format("# image {} label {} {}x{} T={} seed={}\n", opts.index, frame.label,
                                       frame.height, frame.width, opts.timesteps, opts.seed);
        for (std::size_t t = 0; t < spikes.timesteps(); ++t) {
          for (auto v : spikes.row(t, 0)) dump += v ? '1' : '0';
          dump += '\n';
        }
        if (opts.output.empty()) {
          out << dump;
        } else {
          std::ofstream(opts.output, std::ios::binary) << dump;
          out << fmt::format("wrote {} spikes over {} timesteps to {}\n", spikes.count(), spikes.timesteps(),
                             opts.output.string());
        }
        return 0;
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return 1;
}

}  // namespace spikebudget::cli
