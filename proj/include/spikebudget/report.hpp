#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spikebudget/continual.hpp"

namespace spikebudget {

/// Metrics, config echo and seed. Wall time is left out so that repeated
/// runs serialize byte-identically.
std::string run_result_json(const RunResult& result);

/// Header "after_task,task_1,...,task_K"; one row per trained task with empty
/// cells above the diagonal.
std::string accuracy_csv(const AccuracyMatrix& matrix);
AccuracyMatrix parse_accuracy_csv(std::string_view text);

std::string budget_log_csv(const std::vector<BudgetLogEntry>& log);

struct RunArtifacts {
  std::filesystem::path json;
  std::filesystem::path accuracy_csv;
  std::filesystem::path budget_csv;
};

/// Write result.json, accuracy.csv and budget_log.csv into `dir`.
RunArtifacts write_run_artifacts(const std::filesystem::path& dir, const RunResult& result);

}  // namespace spikebudget
