#include "spikebudget/report.hpp"

#include <charconv>
#include <fstream>

#include <fmt/format.h>

#include "json.hpp"

namespace spikebudget {

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json lif_json(const LifParams& p) {
  const auto c = constrain(p);
  return {{"beta_raw", p.beta_raw}, {"vthr_raw", p.vthr_raw}, {"beta", c.beta}, {"v_thr", c.v_thr}};
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string run_result_json(const RunResult& r) {
  const RunConfig& c = r.config;
  const ComponentFlags flags = c.flags();
  nlohmann::json config = {
      {"config", to_string(c.config)},
      {"replay", flags.replay},
      {"learnable_lif", flags.learnable_lif},
      {"scheduler", flags.scheduler},
      {"epochs_per_task", c.epochs_per_task},
      {"batch_size", c.batch_size},
      {"timesteps", c.timesteps},
      {"hidden", c.hidden},
      {"learning_rate", c.learning_rate},
      {"max_grad_norm", c.max_grad_norm},
      {"r_target", c.budget.r_target},
      {"eta", c.budget.eta},
      {"lambda_min", c.budget.lambda_min},
      {"lambda_max", c.budget.lambda_max},
      {"window", c.budget.window},
      {"buffer_capacity", c.buffer_capacity},
      {"replay_reencode", c.replay_reencode},
      {"replay_ratio", c.replay_ratio},
      {"replay_insertion", to_string(c.replay_insertion)},
      {"beta_init", c.beta_init},
      {"vthr_init", c.vthr_init},
      {"surrogate_slope", c.surrogate_slope},
  };
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t j = 0; j < r.accuracy.tasks(); ++j) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t k = 0; k <= j; ++k) row.push_back(r.accuracy.has(j, k) ? nlohmann::json(r.accuracy.at(j, k)) : nlohmann::json(nullptr));
    rows.push_back(std::move(row));
  }
  nlohmann::json doc = {
      {"seed", c.seed},
      {"config", std::move(config)},
      {"metrics",
       {{"acc", r.acc},
        {"forgetting", optional_number(r.forgetting)},
        {"bwt", optional_number(r.bwt)},
        {"mean_spike_rate", r.mean_spike_rate},
        {"final_lambda", r.final_lambda},
        {"steps", r.budget_log.size()}}},
      {"accuracy_matrix", std::move(rows)},
      {"lif_initial", lif_json(r.lif_initial)},
      {"lif_final", lif_json(r.lif_final)},
  };
  return doc.dump(2) + "\n";
}

std::string accuracy_csv(const AccuracyMatrix& m) {
  std::string out = "after_task";
  for (std::size_t k = 0; k < m.tasks(); ++k) out += fmt::format(",task_{}", k + 1);
  out += '\n';
  for (std::size_t j = 0; j < m.tasks(); ++j) {
    out += fmt::format("{}", j + 1);
    for (std::size_t k = 0; k < m.tasks(); ++k) {
      out += ',';
      if (k <= j && m.has(j, k)) out += fmt::format("{}", m.at(j, k));
    }
    out += '\n';
  }
  return out;
}

AccuracyMatrix parse_accuracy_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty()) throw ContinualError("accuracy csv: empty input");
  const auto header = split_fields(lines[0]);
  if (header.size() < 2 || header[0] != "after_task") {
    throw ContinualError("accuracy csv: header must start with 'after_task'");
  }
  const std::size_t tasks = header.size() - 1;
  for (std::size_t k = 0; k < tasks; ++k) {
    if (header[k + 1] != fmt::format("task_{}", k + 1)) {
      throw ContinualError(fmt::format("accuracy csv: header column {} should be task_{}", k + 2, k + 1));
    }
  }
  if (lines.size() - 1 != tasks) {
    throw ContinualError(fmt::format("accuracy csv: {} task columns but {} rows", tasks, lines.size() - 1));
  }
  AccuracyMatrix m(tasks);
  for (std::size_t j = 0; j < tasks; ++j) {
    const auto fields = split_fields(lines[j + 1]);
    if (fields.size() != tasks + 1) {
      throw ContinualError(fmt::format("accuracy csv line {}: expected {} fields, got {}", j + 2,
                                       tasks + 1, fields.size()));
    }
    if (fields[0] != fmt::format("{}", j + 1)) {
      throw ContinualError(fmt::format("accuracy csv line {}: row label should be {}", j + 2, j + 1));
    }
    for (std::size_t k = 0; k < tasks; ++k) {
      const std::string& cell = fields[k + 1];
      if (k > j) {
        if (!cell.empty()) {
          throw ContinualError(fmt::format("accuracy csv line {}: entry above the diagonal", j + 2));
        }
        continue;
      }
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ContinualError(fmt::format("accuracy csv line {}: '{}' is not a number", j + 2, cell));
      }
      m.set(j, k, value);
    }
  }
  return m;
}

std::string budget_log_csv(const std::vector<BudgetLogEntry>& log) {
  std::string out = "step,task,r_batch,r_window,lambda_rate,penalty,loss\n";
  for (const auto& e : log) {
    out += fmt::format("{},{},{},{},{},{},{}\n", e.step, e.task + 1, e.r_batch, e.r_window,
                       e.lambda_rate, e.penalty, e.loss);
  }
  return out;
}

RunArtifacts write_run_artifacts(const std::filesystem::path& dir, const RunResult& result) {
  std::filesystem::create_directories(dir);
  RunArtifacts paths{dir / "result.json", dir / "accuracy.csv", dir / "budget_log.csv"};
  write_text(paths.json, run_result_json(result));
  write_text(paths.accuracy_csv, accuracy_csv(result.accuracy));
  write_text(paths.budget_csv, budget_log_csv(result.budget_log));
  return paths;
}

}  // namespace spikebudget
