#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "spikebudget/cli/commands.hpp"
#include "spikebudget/cli/config.hpp"

using namespace spikebudget::cli;

int main(int argc, char** argv) {
  CLI::App app{"Spiking-network continual learning with spike budgets"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Train the configured ladder of runs");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string preset;
  bool parallel = false;
  std::vector<std::string> sets;
  run->add_option("--config", config_path, "YAML experiment config")->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Single seed, replaces the config's seed list");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--preset", preset, "Start from a preset")
      ->check(CLI::IsMember({"mnist-desk", "mnist-full"}));
  run->add_flag("--parallel", parallel, "One worker thread per seed");
  run->add_option("--set", sets, "Override a config key, KEY=VALUE (repeatable)");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Recompute ACC/F/BWT from an accuracy CSV");
  std::string csv_path;
  metrics->add_option("csv", csv_path, "accuracy.csv")->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare BPTT gradients with finite differences");
  GradcheckOptions gc;
  std::string size_spec;
  gradcheck->add_option("--size", size_spec, "IN,HIDDEN,OUT,T,BATCH (default 8,6,3,4,3)");
  gradcheck->add_option("--seed", gc.seed, "Seed of the first network");
  gradcheck->add_option("--nets", gc.nets, "Number of random networks")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tolerance", gc.tolerance, "Maximum relative error");

  // encode
  auto* encode = app.add_subcommand("encode", "Write event files or spike raster dumps");
  EncodeOptions enc;
  std::string source = "synthetic";
  encode->add_option("--source", source, "synthetic | nmnist | idx")
      ->check(CLI::IsMember({"synthetic", "nmnist", "idx"}));
  encode->add_option("--input", enc.input, "N-MNIST .bin or IDX image file");
  encode->add_option("--labels", enc.labels, "IDX label file (idx source)");
  encode->add_option("--output,-o", enc.output, "Output path (EVT1 file or raster text)");
  encode->add_option("--width", enc.width);
  encode->add_option("--height", enc.height);
  encode->add_option("--duration-us", enc.duration_us);
  encode->add_option("--rate-hz", enc.rate_hz);
  encode->add_option("--index", enc.index, "Image index (idx source)");
  encode->add_option("--timesteps", enc.timesteps)->check(CLI::PositiveNumber);
  encode->add_option("--seed", enc.seed);

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    Overrides overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) {
        std::cerr << "error: --set expects KEY=VALUE, got '" << s << "'\n";
        return 2;
      }
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) overrides.emplace_back("seeds", std::to_string(*seed));
    if (!out_dir.empty()) overrides.emplace_back("out_dir", out_dir);
    const std::optional<std::string> preset_opt = preset.empty() ? std::nullopt : std::optional(preset);
    try {
      const auto cfg = config_path.empty() ? default_config(overrides, preset_opt)
                                           : parse_config(config_path, overrides, preset_opt);
      return cmd_run(cfg, parallel, std::cout, std::cerr);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    }
  }
  if (metrics->parsed()) return cmd_metrics(csv_path, std::cout, std::cerr);
  if (gradcheck->parsed()) {
    if (!size_spec.empty()) {
      try {
        parse_size_spec(size_spec, gc);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
      }
    }
    return cmd_gradcheck(gc, std::cout);
  }
  if (encode->parsed()) {
    enc.source = source == "nmnist" ? EncodeOptions::Source::kNmnist
                 : source == "idx"  ? EncodeOptions::Source::kIdx
                                    : EncodeOptions::Source::kSynthetic;
    if (enc.source != EncodeOptions::Source::kIdx && enc.output.empty()) {
      std::cerr << "error: --output is required for event files\n";
      return 2;
    }
    if (enc.source != EncodeOptions::Source::kSynthetic && enc.input.empty()) {
      std::cerr << "error: --input is required for this source\n";
      return 2;
    }
    return cmd_encode(enc, std::cout, std::cerr);
  }
  return 0;
}
