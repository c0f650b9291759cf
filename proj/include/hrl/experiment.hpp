#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrl/io.hpp"
#include "hrl/tasks.hpp"

namespace hrl {

enum class ExperimentKind {
  SkillLengthSweep,
  RateSweep,
  PessimismAudit,
  RepresentationContrast,
  DecompositionAudit,
  TvAudit,
};

std::string experiment_kind_name(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

enum class TaskType { Chain, Bandit, Random };

struct TaskSpec {
  TaskType type = TaskType::Chain;
  ChainConfig chain;
  BanditConfig bandit;
  RandomTaskConfig random;

  TabularTask build(std::uint64_t seed) const;
  double gamma() const;
};

constexpr int kConfigSchemaVersion = 1;

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::SkillLengthSweep;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<int> c_list{1};
  std::vector<int> n_list{500};
  std::vector<double> c_grid{0.0, 0.5, 1.0, 2.0};  // bonus constants for the pessimism audit
  TaskSpec task;
  PipelineOptions pipeline;  // c, N and seed are set per cell
  ContrastConfig contrast;
  int tv_max_states = 6;
  int tv_max_c = 4;
  std::string output_dir = "out";
  int workers = 0;  // 0: hardware concurrency
  /// Canonical JSON of the parsed config; its hash tags every plot.
  Json canonical;
};

struct ConfigIssue {
  std::string field;
  std::string message;
};

std::string format_issues(const std::vector<ConfigIssue>& issues);

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

/// Structural and range checks of every field, including the sub-configs'
/// own invariants. Throws ConfigError listing every problem found.
ExperimentConfig parse_experiment_config(const Json& j);

/// Reads and checks a config file without running anything. Parse errors come
/// back as a single issue with line context.
std::vector<ConfigIssue> validate_config_file(const std::string& path);

struct CellOutcome {
  int index = 0;
  bool ok = false;
  std::string error;
  Json record;
  std::vector<std::string> csv;  // matches the kind's cell header
};

struct ExperimentReport {
  int cells = 0;
  int failed = 0;
  std::vector<CellOutcome> outcomes;
  Json summary;
  CsvTable cell_table;
  CsvTable summary_table;
  std::vector<std::string> files;  // written paths, relative to output_dir

  bool all_ok() const { return failed == 0; }
};

struct RunOptions {
  std::optional<std::string> output_dir;
  std::optional<int> workers;
  std::optional<std::uint64_t> master_seed;
  bool write = true;
};

/// Runs every cell (concurrently up to the worker count), then writes
/// cells/<index>.json, cells.csv, summary.csv, summary.json, config.json and
/// the kind's SVG plots. Output bytes depend only on the config.
ExperimentReport run_experiment(ExperimentConfig config, const RunOptions& options = {});

/// Runs `count` jobs on up to `workers` threads; job i writes only slot i.
void parallel_for(int count, int workers, const std::function<void(int)>& job);

}  // namespace hrl
