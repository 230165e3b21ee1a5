// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include "spikebudget/budget.hpp"
#include "spikebudget/cli/commands.hpp"
#include "spikebudget/cli/config.hpp"
#include "spikebudget/continual.hpp"
#include "spikebudget/encoding.hpp"
#include "spikebudget/gradcheck.hpp"
#include "spikebudget/replay.hpp"
#include "spikebudget/report.hpp"
#include "test_support.hpp"

namespace sb = spikebudget;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "ok: " : "FAILED: ") + what);
  }
};

int failures = 0;

void report(int id, const std::string& title, const Verdict& v) {
  for (const auto& n : v.notes) std::cout << "    " << n << '\n';
  std::cout << fmt::format("criterion {} [{}] {}\n", id, v.pass ? "PASS" : "FAIL", title) << std::flush;
  if (!v.pass) ++failures;
}

template <typename F>
void guarded(int id, const std::string& title, F&& body) {
  Verdict v;
  try {
    body(v);
  } catch (const std::exception& e) {
    v.check(false, fmt::format("unexpected exception: {}", e.what()));
  }
  report(id, title, v);
}

// 1 ---------------------------------------------------------------------------

void gradient_oracle(Verdict& v) {
  const auto start = Clock::now();
  double worst = 0.0;
  const std::size_t nets = 20;
  for (std::size_t i = 0; i < nets; ++i) {
    sb::GradcheckSpec spec;
    spec.seed = 1000 + i;
    // 8 inputs + 6 hidden + 3 outputs = 17 units, T = 4.
    const auto r = sb::run_gradcheck(spec);
    worst = std::max(worst, r.worst);
  }
  const double elapsed = seconds_since(start);
  v.check(worst <= 1e-4, fmt::format("{} nets, worst relative error {:.3e} <= 1e-4", nets, worst));
  v.check(elapsed < 10.0, fmt::format("runtime {:.3f} s < 10 s", elapsed));
}

// 2 ---------------------------------------------------------------------------

void metric_oracle(Verdict& v) {
  namespace t = sb::testing;
  std::mt19937_64 rng(2024);
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t K = 1 + rng() % 6;
    const auto a = t::random_triangle(rng, K);
    const auto m = t::to_matrix(a);
    if (sb::acc_metric(m) != t::brute_acc(a)) ++mismatches;
    const auto f = sb::forgetting_metric(m);
    const auto b = sb::bwt_metric(m);
    if (K == 1) {
      if (f || b) ++mismatches;
    } else if (!f || !b || *f != t::brute_forgetting(a) || *b != t::brute_bwt(a)) {
      ++mismatches;
    }
  }
  v.check(mismatches == 0, fmt::format("1000 matrices (K <= 6), {} bitwise mismatches", mismatches));
}

// 3 ---------------------------------------------------------------------------

void controller_properties(Verdict& v) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool bounded = true;
  for (int run = 0; run < 100; ++run) {
    sb::BudgetConfig cfg;
    cfg.eta = 0.01 + 5.0 * u(rng);
    cfg.r_target = 0.01 + 0.98 * u(rng);
    sb::BudgetControllerState s;
    for (int i = 0; i < 1000; ++i) {
      const double r = (run % 3 == 0) ? u(rng) : static_cast<double>((i / 50 + run) % 2);
      s = sb::controller_update(std::move(s), cfg, r);
      bounded = bounded && s.lambda_rate >= 0.0 && s.lambda_rate <= 5.0;
    }
  }
  v.check(bounded, "lambda stays in [0, 5] over 100 random and saturating rate streams");

  sb::BudgetConfig cfg;
  bool fixed = true;
  for (double lambda0 : {0.0, 0.3, 2.5, 5.0}) {
    sb::BudgetControllerState s;
    s.lambda_rate = lambda0;
    for (int i = 0; i < 200; ++i) s = sb::controller_update(std::move(s), cfg, cfg.r_target);
    fixed = fixed && s.lambda_rate == lambda0;
  }
  v.check(fixed, "lambda unchanged when the window mean equals r_target");

  // Synthetic plant: rate = 0.30 - 0.10 * lambda + N(0, 0.01), so the target
  // 0.10 is reached at lambda = 2.
  std::normal_distribution<double> noise(0.0, 0.01);
  cfg.eta = 0.2;
  sb::BudgetControllerState s;
  int reached = -1;
  for (int step = 0; step < 500 && reached < 0; ++step) {
    const double r = std::clamp(0.30 - 0.10 * s.lambda_rate + noise(rng), 0.0, 1.0);
    s = sb::controller_update(std::move(s), cfg, r);
    if (std::abs(s.window_mean() - cfg.r_target) <= 0.01) reached = step + 1;
  }
  v.check(reached > 0, reached > 0 ? fmt::format("plant within 0.01 of target after {} steps (eta 0.2)", reached)
                                   : std::string("plant did not reach the target within 500 steps"));
}

// 4 ---------------------------------------------------------------------------

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

void desk_ablation(Verdict& v) {
  const auto start = Clock::now();
  const fs::path out = fs::temp_directory_path() / "spikebudget_acceptance_desk";
  fs::remove_all(out);
  auto cfg = sb::cli::default_config({{"out_dir", out.string()}}, std::string("mnist-desk"));
  std::cout << fmt::format("    data: {}\n", cfg.data_dir.string());
  const auto data = sb::cli::load_dataset(cfg);
  const auto outcomes = sb::cli::run_experiment(cfg, data, false, nullptr);

  std::map<sb::ConfigId, std::map<std::uint64_t, sb::RunResult>> res;
  for (const auto& o : outcomes) {
    if (!o.result) {
      v.check(false, fmt::format("{} seed {} failed: {}", sb::to_string(o.config), o.seed, o.error));
      continue;
    }
    std::cout << "    " << sb::cli::summary_line(*o.result) << '\n';
    res[o.config][o.seed] = *o.result;
  }
  const double elapsed = seconds_since(start);
  if (!v.pass) return;

  auto collect = [&](sb::ConfigId id, auto field) {
    std::vector<double> xs;
    for (std::uint64_t seed : cfg.seeds) xs.push_back(field(res[id][seed]));
    return xs;
  };
  auto acc = [](const sb::RunResult& r) { return r.acc; };
  auto forgetting = [](const sb::RunResult& r) { return r.forgetting.value_or(0.0); };
  auto rate = [](const sb::RunResult& r) { return r.mean_spike_rate; };
  using sb::ConfigId;

  const double c0_acc = mean(collect(ConfigId::kC0, acc));
  const double c0_f = mean(collect(ConfigId::kC0, forgetting));
  const double c1_acc = mean(collect(ConfigId::kC1, acc));
  const double c4_acc = mean(collect(ConfigId::kC4, acc));
  const double c1_rate = mean(collect(ConfigId::kC1, rate));
  const double c4_rate = mean(collect(ConfigId::kC4, rate));

  v.check(c0_acc <= 0.30, fmt::format("C0 ACC {:.4f} <= 0.30 (seed mean)", c0_acc));
  v.check(c0_f >= 0.90, fmt::format("C0 forgetting {:.4f} >= 0.90 (seed mean)", c0_f));
  v.check(c1_acc >= 0.80, fmt::format("C1 ACC {:.4f} >= 0.80 (seed mean)", c1_acc));
  v.check(c4_rate <= 0.75 * c1_rate, fmt::format("C4 spike rate {:.4f} <= 0.75 x C1 {:.4f} (ratio {:.3f})",
                                                 c4_rate, c1_rate, c4_rate / c1_rate));
  v.check(c4_acc >= c1_acc - 0.01, fmt::format("C4 ACC {:.4f} >= C1 ACC - 0.01 = {:.4f}", c4_acc, c1_acc - 0.01));
  for (std::uint64_t seed : cfg.seeds) {
    const double a0 = res[ConfigId::kC0][seed].acc;
    const double a1 = res[ConfigId::kC1][seed].acc;
    const double best = std::max(res[ConfigId::kC2][seed].acc, res[ConfigId::kC4][seed].acc);
    v.check(a1 - a0 >= 0.30 && a1 <= best,
            fmt::format("seed {}: C0 {:.4f} << C1 {:.4f} <= max(C2, C4) {:.4f}", seed, a0, a1, best));
  }
  v.check(elapsed < 15 * 60.0, fmt::format("{} runs in {:.1f} s < 900 s", outcomes.size(), elapsed));
}

// 5 ---------------------------------------------------------------------------

std::vector<std::uint8_t> be32(std::uint32_t x) {
  return {static_cast<std::uint8_t>(x >> 24), static_cast<std::uint8_t>(x >> 16),
          static_cast<std::uint8_t>(x >> 8), static_cast<std::uint8_t>(x)};
}

template <typename F>
bool rejects(F&& parse) {
  try {
    parse();
  } catch (const sb::FormatError&) {
    return true;
  }
  return false;
}

void parser_suites(Verdict& v) {
  // Two 2x3 images and their labels, assembled byte by byte.
  std::vector<std::uint8_t> images = be32(0x00000803);
  for (std::uint32_t d : {2u, 2u, 3u}) {
    const auto b = be32(d);
    images.insert(images.end(), b.begin(), b.end());
  }
  const std::vector<std::uint8_t> pixels = {0, 255, 51, 102, 153, 204, 1, 2, 3, 4, 5, 6};
  images.insert(images.end(), pixels.begin(), pixels.end());
  std::vector<std::uint8_t> labels = be32(0x00000801);
  const auto n = be32(2);
  labels.insert(labels.end(), n.begin(), n.end());
  labels.push_back(7);
  labels.push_back(3);

  const auto img = sb::parse_idx(images);
  const auto lab = sb::parse_idx(labels);
  const auto frames = sb::frames_from_idx(img, lab);
  const bool known = img.dims == std::vector<std::uint32_t>{2, 2, 3} && img.data == pixels &&
                     lab.data == std::vector<std::uint8_t>{7, 3} && frames.size() == 2 &&
                     frames[0].label == 7 && frames[0].height == 2 && frames[0].width == 3 &&
                     frames[0].pixels[1] == 1.0f && std::abs(frames[0].pixels[2] - 0.2f) < 1e-6f && frames[1].label == 3;
  v.check(known, "IDX known vector decodes to the expected dims, bytes, labels and intensities");

  std::mt19937_64 rng(5);
  std::size_t round_trip_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    sb::EventStream s;
    s.width = static_cast<std::uint16_t>(1 + rng() % 128);
    s.height = static_cast<std::uint16_t>(1 + rng() % 128);
    const std::size_t count = rng() % 64;
    std::uint32_t t = 0;
    for (std::size_t e = 0; e < count; ++e) {
      t += static_cast<std::uint32_t>(rng() % 1000);
      s.events.push_back({t, static_cast<std::uint16_t>(rng() % s.width),
                          static_cast<std::uint16_t>(rng() % s.height), static_cast<std::uint8_t>(rng() % 2)});
    }
    const auto bytes = sb::write_event_file(s);
    if (!(sb::parse_event_file(bytes) == s) || sb::write_event_file(sb::parse_event_file(bytes)) != bytes) {
      ++round_trip_failures;
    }
  }
  v.check(round_trip_failures == 0,
          fmt::format("EVT1 write/parse identity on 10^4 random streams, {} failures", round_trip_failures));

  sb::EventStream sample{34, 34, {{10, 1, 2, 1}, {20, 3, 4, 0}}};
  const auto evt = sb::write_event_file(sample);
  std::size_t accepted = 0;
  std::size_t tried = 0;
  auto corrupt_all = [&](const std::vector<std::uint8_t>& base, std::size_t magic_len, auto parse) {
    for (std::size_t pos = 0; pos < magic_len; ++pos) {
      for (int value = 0; value < 256; ++value) {
        if (value == base[pos]) continue;
        auto bad = base;
        bad[pos] = static_cast<std::uint8_t>(value);
        ++tried;
        if (!rejects([&] { parse(bad); })) ++accepted;
      }
    }
  };
  corrupt_all(images, 4, [](const auto& b) { sb::parse_idx(b); });
  corrupt_all(labels, 4, [](const auto& b) { sb::parse_idx(b); });
  corrupt_all(evt, 8, [](const auto& b) { sb::parse_event_file(b); });
  v.check(accepted == 0, fmt::format("{} single-byte magic corruptions (IDX images, IDX labels, EVT1), {} accepted",
                                     tried, accepted));
}

// 6 ---------------------------------------------------------------------------

void replay_invariants(Verdict& v) {
  sb::Rng rng(6);
  sb::ReplayBuffer buf(500, 10);
  bool within = true;
  for (std::size_t i = 0; i < 1000000; ++i) {
    const int label = static_cast<int>(rng() % 10);
    buf.insert({i, label, std::nullopt}, rng);
    within = within && buf.size() <= buf.capacity() && buf.items(label).size() <= buf.slots_per_class();
  }
  v.check(within, "capacity and per-class slots never exceeded over 10^6 random inserts");
  bool balanced = true;
  for (int c = 0; c < 10; ++c) balanced = balanced && buf.items(c).size() == buf.slots_per_class();
  v.check(balanced, fmt::format("every class holds exactly {} items after saturation", buf.slots_per_class()));

  // Survival counts of each stream position over repeated fills.
  const std::size_t slots = 5;
  const std::size_t stream = 25;
  const int trials = 40000;
  std::vector<double> survived(stream, 0.0);
  for (int t = 0; t < trials; ++t) {
    sb::ReplayBuffer b(slots, 1);
    for (std::size_t i = 0; i < stream; ++i) b.insert({i, 0, std::nullopt}, rng);
    for (const auto& it : b.items(0)) survived[it.sample_id] += 1.0;
  }
  const double expected = static_cast<double>(trials) * slots / stream;
  double chi2 = 0.0;
  for (double o : survived) chi2 += (o - expected) * (o - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(stream - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, chi2));
  v.check(p > 0.01, fmt::format("reservoir uniformity chi2 = {:.2f} (df {}), p = {:.4f} > 0.01", chi2, stream - 1, p));
}

// 7 ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism(Verdict& v) {
  auto cfg = sb::cli::default_config({}, std::string("mnist-desk"));
  const auto data = sb::cli::load_dataset(cfg);
  sb::RunConfig run = cfg.run;
  run.config = sb::ConfigId::kC4;
  run.seed = 42;
  const fs::path root = fs::temp_directory_path() / "spikebudget_acceptance_determinism";
  fs::remove_all(root);
  std::vector<sb::RunArtifacts> artifacts;
  for (const char* name : {"a", "b"}) {
    const auto r = sb::run_config(run, data, cfg.task_schedule());
    artifacts.push_back(sb::write_run_artifacts(root / name, r));
  }
  const std::pair<const char*, fs::path sb::RunArtifacts::*> files[] = {
      {"result.json", &sb::RunArtifacts::json},
      {"accuracy.csv", &sb::RunArtifacts::accuracy_csv},
      {"budget_log.csv", &sb::RunArtifacts::budget_csv}};
  for (const auto& [name, member] : files) {
    const auto a = slurp(artifacts[0].*member);
    const auto b = slurp(artifacts[1].*member);
    v.check(!a.empty() && a == b, fmt::format("{} byte-identical across two C4 seed-42 runs ({} bytes)", name, a.size()));
  }
}

}  // namespace

int main() {
  guarded(1, "gradient oracle", gradient_oracle);
  guarded(2, "metric oracle", metric_oracle);
  guarded(3, "controller properties", controller_properties);
  guarded(4, "desk-scale MNIST ablation", desk_ablation);
  guarded(5, "parser suites", parser_suites);
  guarded(6, "replay invariants", replay_invariants);
  guarded(7, "determinism", determinism);
  std::cout << fmt::format("acceptance: {} of 7 criteria passed\n", 7 - failures);
  return failures == 0 ? 0 : 1;
}
