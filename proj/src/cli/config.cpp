#include "spikebudget/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#ifndef SPIKEBUDGET_DEFAULT_DATA_ROOT
#define SPIKEBUDGET_DEFAULT_DATA_ROOT "data"
#endif

namespace spikebudget::cli {

namespace {

// Where a value came from, for diagnostics.
struct Site {
  std::string origin;
  std::string key;
  int line = -1;  // 1-based, -1 when unknown (command-line overrides)

  std::string describe() const {
    return line > 0 ? fmt::format("{}:{}: key '{}'", origin, line, key)
                    : fmt::format("{}: key '{}'", origin, key);
  }
};

[[noreturn]] void type_error(const Site& site, const std::string& expected, const YAML::Node& node) {
  std::string got = node.IsScalar() ? fmt::format("'{}'", node.Scalar())
                    : node.IsSequence() ? std::string("a list")
                    : node.IsMap()      ? std::string("a mapping")
                                        : std::string("nothing");
  throw ConfigError(fmt::format("{}: expected {}, got {}", site.describe(), expected, got));
}

std::string as_string(const YAML::Node& node, const Site& site) {
  if (!node.IsScalar()) type_error(site, "a string", node);
  return node.Scalar();
}

std::uint64_t as_uint(const YAML::Node& node, const Site& site) {
  if (!node.IsScalar()) type_error(site, "a non-negative integer", node);
  const std::string& s = node.Scalar();
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    type_error(site, "a non-negative integer", node);
  }
  return v;
}

std::size_t as_size(const YAML::Node& node, const Site& site) {
  return static_cast<std::size_t>(as_uint(node, site));
}

double as_double(const YAML::Node& node, const Site& site) {
  if (!node.IsScalar()) type_error(site, "a number", node);
  const std::string& s = node.Scalar();
  double v = 0.0;
  const char* begin = s.data() + (!s.empty() && s[0] == '+' ? 1 : 0);
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) type_error(site, "a number", node);
  return v;
}

bool as_bool(const YAML::Node& node, const Site& site) {
  if (!node.IsScalar()) type_error(site, "true or false", node);
  const std::string& s = node.Scalar();
  if (s == "true" || s == "True" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "False" || s == "no" || s == "off") return false;
  type_error(site, "true or false", node);
}

// A scalar or a list of scalars.
template <typename T, typename Convert>
std::vector<T> as_list(const YAML::Node& node, const Site& site, Convert convert) {
  std::vector<T> out;
  if (node.IsScalar()) {
    out.push_back(convert(node, site));
  } else if (node.IsSequence()) {
    for (const auto& item : node) out.push_back(convert(item, site));
  } else {
    type_error(site, "a value or a list", node);
  }
  if (out.empty()) throw ConfigError(fmt::format("{}: list must not be empty", site.describe()));
  return out;
}

ConfigId as_config_id(const YAML::Node& node, const Site& site) {
  const auto text = as_string(node, site);
  try {
    return parse_config_id(text);
  } catch (const std::exception&) {
    type_error(site, "one of C0..C4", node);
  }
}

using Setter = std::function<void(ExperimentConfig&, const YAML::Node&, const Site&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"preset", [](ExperimentConfig&, const YAML::Node&, const Site&) {}},  // handled up front
      {"data_dir", [](auto& c, auto& n, auto& s) { c.data_dir = as_string(n, s); }},
      {"train_images", [](auto& c, auto& n, auto& s) { c.train_images = as_string(n, s); }},
      {"train_labels", [](auto& c, auto& n, auto& s) { c.train_labels = as_string(n, s); }},
      {"test_images", [](auto& c, auto& n, auto& s) { c.test_images = as_string(n, s); }},
      {"test_labels", [](auto& c, auto& n, auto& s) { c.test_labels = as_string(n, s); }},
      {"num_classes", [](auto& c, auto& n, auto& s) { c.num_classes = as_size(n, s); }},
      {"train_per_class", [](auto& c, auto& n, auto& s) { c.train_per_class = as_size(n, s); }},
      {"test_per_class", [](auto& c, auto& n, auto& s) { c.test_per_class = as_size(n, s); }},
      {"schedule", [](auto& c, auto& n, auto& s) { c.schedule = as_string(n, s); }},
      {"configs", [](auto& c, auto& n, auto& s) { c.configs = as_list<ConfigId>(n, s, as_config_id); }},
      {"seeds", [](auto& c, auto& n, auto& s) { c.seeds = as_list<std::uint64_t>(n, s, as_uint); }},
      {"out_dir", [](auto& c, auto& n, auto& s) { c.out_dir = as_string(n, s); }},
      {"checkpoints", [](auto& c, auto& n, auto& s) { c.checkpoints = as_bool(n, s); }},
      {"epochs_per_task", [](auto& c, auto& n, auto& s) { c.run.epochs_per_task = as_size(n, s); }},
      {"batch_size", [](auto& c, auto& n, auto& s) { c.run.batch_size = as_size(n, s); }},
      {"timesteps", [](auto& c, auto& n, auto& s) { c.run.timesteps = as_size(n, s); }},
      {"hidden", [](auto& c, auto& n, auto& s) { c.run.hidden = as_size(n, s); }},
      {"learning_rate", [](auto& c, auto& n, auto& s) { c.run.learning_rate = as_double(n, s); }},
      {"max_grad_norm", [](auto& c, auto& n, auto& s) { c.run.max_grad_norm = as_double(n, s); }},
      {"budget_preset",
       [](auto& c, auto& n, auto& s) {
         const auto name = as_string(n, s);
         if (name == "frame") {
           c.run.budget = BudgetConfig::frame_preset();
         } else if (name == "event") {
           c.run.budget = BudgetConfig::event_preset();
         } else {
           type_error(s, "'frame' or 'event'", n);
         }
       }},
      {"r_target", [](auto& c, auto& n, auto& s) { c.run.budget.r_target = as_double(n, s); }},
      {"eta", [](auto& c, auto& n, auto& s) { c.run.budget.eta = as_double(n, s); }},
      {"lambda_min", [](auto& c, auto& n, auto& s) { c.run.budget.lambda_min = as_double(n, s); }},
      {"lambda_max", [](auto& c, auto& n, auto& s) { c.run.budget.lambda_max = as_double(n, s); }},
      {"window", [](auto& c, auto& n, auto& s) { c.run.budget.window = as_size(n, s); }},
      {"buffer_capacity", [](auto& c, auto& n, auto& s) { c.run.buffer_capacity = as_size(n, s); }},
      {"replay_reencode", [](auto& c, auto& n, auto& s) { c.run.replay_reencode = as_bool(n, s); }},
      {"replay_ratio", [](auto& c, auto& n, auto& s) { c.run.replay_ratio = as_double(n, s); }},
      {"replay_insertion",
       [](auto& c, auto& n, auto& s) {
         try {
           c.run.replay_insertion = parse_replay_insertion(as_string(n, s));
         } catch (const ContinualError&) {
           type_error(s, "'final_epoch' or 'task_end'", n);
         }
       }},
      {"beta_init", [](auto& c, auto& n, auto& s) { c.run.beta_init = as_double(n, s); }},
      {"vthr_init", [](auto& c, auto& n, auto& s) { c.run.vthr_init = as_double(n, s); }},
      {"surrogate_slope", [](auto& c, auto& n, auto& s) { c.run.surrogate_slope = as_double(n, s); }},
  };
  return table;
}

struct Entry {
  std::string key;
  YAML::Node value;
  Site site;
};

// budget_preset replaces the whole budget block, so it must land before the
// individual budget keys regardless of where it appears.
void apply_entries(ExperimentConfig& cfg, const std::vector<Entry>& entries) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& e : entries) {
      if ((e.key == "budget_preset") != (pass == 0)) continue;
      const auto it = setters().find(e.key);
      if (it == setters().end()) {
        throw ConfigError(fmt::format("{}: unknown key", e.site.describe()));
      }
      it->second(cfg, e.value, e.site);
    }
  }
}

std::filesystem::path data_root() {
  if (const char* env = std::getenv("SPIKEBUDGET_DATA"); env != nullptr && *env != '\0') return env;
  return SPIKEBUDGET_DEFAULT_DATA_ROOT;
}

void validate(const ExperimentConfig& cfg) {
  TaskSchedule schedule;
  try {
    schedule = cfg.task_schedule();
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("schedule '{}': {}", cfg.schedule, e.what()));
  }
  if (schedule.num_classes() > cfg.num_classes) {
    throw ConfigError(fmt::format("schedule '{}' uses {} classes but num_classes is {}", cfg.schedule,
                                  schedule.num_classes(), cfg.num_classes));
  }
  for (const auto& task : schedule.tasks()) {
    for (int label : task) {
      if (label < 0 || static_cast<std::size_t>(label) >= cfg.num_classes) {
        throw ConfigError(fmt::format("schedule '{}' names class {} outside [0, {})", cfg.schedule, label,
                                      cfg.num_classes));
      }
    }
  }
  if (cfg.test_images.empty() != cfg.test_labels.empty()) {
    throw ConfigError("test_images and test_labels must be given together");
  }
  try {
    cfg.run.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig build(const std::vector<Entry>& file_entries, const Overrides& overrides,
                       const std::optional<std::string>& preset_override) {
  std::vector<Entry> override_entries;
  for (const auto& [key, text] : overrides) {
    YAML::Node value;
    try {
      value = YAML::Load(text);
    } catch (const YAML::Exception& e) {
      throw ConfigError(fmt::format("command line: key '{}': {}", key, e.msg));
    }
    override_entries.push_back({key, value, {"command line", key, -1}});
  }

  std::optional<std::string> preset = preset_override;
  if (!preset) {
    for (const auto& e : file_entries) {
      if (e.key == "preset") preset = as_string(e.value, e.site);
    }
  }
  ExperimentConfig cfg = preset ? preset_config(*preset) : ExperimentConfig{};
  apply_entries(cfg, file_entries);
  apply_entries(cfg, override_entries);

  if (cfg.data_dir.is_relative()) cfg.data_dir = data_root() / cfg.data_dir;
  validate(cfg);
  return cfg;
}

}  // namespace

std::filesystem::path ExperimentConfig::resolve(const std::string& file) const {
  const std::filesystem::path p(file);
  return p.is_absolute() ? p : data_dir / p;
}

TaskSchedule ExperimentConfig::task_schedule() const { return TaskSchedule::parse(schedule); }

void ExperimentConfig::check_files() const {
  std::vector<std::string> files = {train_images, train_labels};
  if (!test_images.empty()) {
    files.push_back(test_images);
    files.push_back(test_labels);
  }
  for (const auto& f : files) {
    const auto path = resolve(f);
    if (!std::filesystem::is_regular_file(path)) {
      throw ConfigError(fmt::format("data file not found: {} (set data_dir or SPIKEBUDGET_DATA)",
                                    path.string()));
    }
  }
}

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig cfg;
  cfg.preset = name;
  cfg.run.timesteps = 25;
  cfg.run.hidden = 128;
  cfg.seeds = {42, 43, 44};
  if (name == "mnist-desk") {
    cfg.data_dir = "mnist-5k";
    cfg.train_per_class = 256;
    cfg.test_per_class = 128;
    cfg.run.epochs_per_task = 3;
    cfg.run.buffer_capacity = 500;
    // With 1:1 mixing the eight old classes share as many replay slots per
    // batch as the two current classes; 4:1 restores rough class balance.
    cfg.run.replay_ratio = 4.0;
  } else if (name == "mnist-full") {
    cfg.data_dir = "mnist";
    cfg.test_images = "t10k-images-idx3-ubyte";
    cfg.test_labels = "t10k-labels-idx1-ubyte";
    cfg.run.epochs_per_task = 5;
    cfg.run.buffer_capacity = 2000;
  } else {
    throw ConfigError(fmt::format("unknown preset '{}' (expected mnist-desk or mnist-full)", name));
  }
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin,
                                   const Overrides& overrides,
                                   const std::optional<std::string>& preset_override) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(fmt::format("{}:{}: {}", origin, e.mark.line + 1, e.msg));
  }
  std::vector<Entry> entries;
  if (root.IsMap()) {
    for (const auto& kv : root) {
      const int line = kv.first.Mark().line + 1;
      if (!kv.first.IsScalar()) throw ConfigError(fmt::format("{}:{}: keys must be plain names", origin, line));
      entries.push_back({kv.first.Scalar(), kv.second, {origin, kv.first.Scalar(), line}});
    }
  } else if (!root.IsNull()) {
    throw ConfigError(fmt::format("{}: top level must be a mapping of keys to values", origin));
  }
  return build(entries, overrides, preset_override);
}

ExperimentConfig parse_config(const std::filesystem::path& path, const Overrides& overrides,
                              const std::optional<std::string>& preset_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path.string(), overrides, preset_override);
}

ExperimentConfig default_config(const Overrides& overrides, const std::optional<std::string>& preset) {
  return build(std::vector<Entry>{}, overrides, preset);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, setter] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

}  // namespace spikebudget::cli
