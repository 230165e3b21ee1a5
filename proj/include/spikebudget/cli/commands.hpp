#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spikebudget/cli/config.hpp"
#include "spikebudget/continual.hpp"

namespace spikebudget::cli {

/// Load the IDX files named by the config and carve the per-class splits.
Dataset load_dataset(const ExperimentConfig& cfg);

/// "ACC=0.8125 F=0.1000 BWT=-0.0950", with n/a for absent metrics.
std::string format_metrics(double acc, const std::optional<double>& forgetting,
                           const std::optional<double>& bwt);

/// One line per finished run: config, seed, metrics and spike percentage.
std::string summary_line(const RunResult& result);

struct RunOutcome {
  ConfigId config = ConfigId::kC0;
  std::uint64_t seed = 0;
  std::optional<RunResult> result;  // empty when the run failed
  std::string error;
  std::filesystem::path dir;
};

/// Run every (config, seed) pair and write per-run artifacts under
/// out_dir/<config>/seed_<seed>/. With `parallel`, one worker thread per seed.
std::vector<RunOutcome> run_experiment(const ExperimentConfig& cfg, const Dataset& data, bool parallel,
                                       std::ostream* log);

/// Returns 0 iff every requested run completed.
int cmd_run(const ExperimentConfig& cfg, bool parallel, std::ostream& out, std::ostream& err);

/// Recompute ACC/F/BWT from an accuracy-matrix CSV and print them.
int cmd_metrics(const std::filesystem::path& csv, std::ostream& out, std::ostream& err);

struct GradcheckOptions {
  std::size_t input = 8;
  std::size_t hidden = 6;
  std::size_t output = 3;
  std::size_t timesteps = 4;
  std::size_t batch = 3;
  std::uint64_t seed = 1;
  std::size_t nets = 20;
  double tolerance = 1e-4;
};

/// Parse "IN,HIDDEN,OUT,T,BATCH" into the size fields of `opts`.
void parse_size_spec(const std::string& spec, GradcheckOptions& opts);

/// Returns 0 iff every network's worst relative error is within tolerance.
int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out);

struct EncodeOptions {
  enum class Source { kSynthetic, kNmnist, kIdx };
  Source source = Source::kSynthetic;
  std::filesystem::path input;         // N-MNIST .bin or IDX images
  std::filesystem::path labels;        // IDX labels (optional for kIdx)
  std::filesystem::path output;        // EVT1 file or text dump
  std::uint16_t width = 34;
  std::uint16_t height = 34;
  std::uint32_t duration_us = 300000;
  double rate_hz = 10000.0;
  std::size_t index = 0;               // image to encode for kIdx
  std::size_t timesteps = 25;
  std::uint64_t seed = 42;
};

int cmd_encode(const EncodeOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace spikebudget::cli
