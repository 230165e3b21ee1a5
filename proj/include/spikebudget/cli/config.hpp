#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spikebudget/continual.hpp"

namespace spikebudget::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string preset;  // empty when none
  std::filesystem::path data_dir;
  std::string train_images = "train-images-idx3-ubyte";
  std::string train_labels = "train-labels-idx1-ubyte";
  // Empty test paths carve the test split out of the training file.
  std::string test_images;
  std::string test_labels;
  std::size_t num_classes = 10;
  std::size_t train_per_class = 0;
  std::size_t test_per_class = 0;
  std::string schedule = "5x2";
  std::vector<ConfigId> configs = {ConfigId::kC0, ConfigId::kC1, ConfigId::kC2, ConfigId::kC3,
                                   ConfigId::kC4};
  std::vector<std::uint64_t> seeds = {42};
  RunConfig run;
  std::filesystem::path out_dir = "runs";
  bool checkpoints = false;

  /// Paths of the image/label files, resolved against data_dir.
  std::filesystem::path resolve(const std::string& file) const;
  TaskSchedule task_schedule() const;
  /// Throws ConfigError if a referenced data file is missing.
  void check_files() const;
};

/// Settings of a named preset ("mnist-desk" or "mnist-full").
ExperimentConfig preset_config(const std::string& name);

/// `key=value` pairs from the command line; values use the same syntax as
/// the config file and take precedence over it.
using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Parse YAML text. `origin` names the source in diagnostics. A `preset` key
/// (or `preset_override`) seeds the defaults before other keys apply.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<config>",
                                   const Overrides& overrides = {},
                                   const std::optional<std::string>& preset_override = std::nullopt);

/// Read and parse a config file. Throws ConfigError for a missing file,
/// unknown keys and type mismatches, with line numbers where available.
ExperimentConfig parse_config(const std::filesystem::path& path, const Overrides& overrides = {},
                              const std::optional<std::string>& preset_override = std::nullopt);

/// Config built from a preset (or plain defaults) plus overrides, no file.
ExperimentConfig default_config(const Overrides& overrides = {},
                                const std::optional<std::string>& preset = std::nullopt);

/// Every key the config file accepts.
const std::vector<std::string>& config_keys();

}  // namespace spikebudget::cli
