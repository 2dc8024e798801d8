#pragma once

#include "leo/agents.hpp"

namespace leo {

struct ExperimentConfig {
  std::string task = "HB1";
  std::string grid_preset = "desk";
  AgentConfig agent;
  AbstractorConfig abstractor;
  int n_parallel_envs = 5;
  int total_env_steps = 0;  // 0: per-task default (25,000 for HB4, 10,000 otherwise)
  int eval_every = 500;
  int n_eval_episodes = 20;
  int train_ratio = 1;  // learner updates per env step once the buffer is warm
  std::vector<uint64_t> seeds{0};
  bool serial = false;
  int jobs = 1;
  std::string out_dir = "runs";
  std::string demos_path;
  std::string abstractor_path;
  int checkpoint_every = 0;  // env steps between checkpoints; 0 = final only
  std::string resume_from;

  int resolved_total_steps() const {
    if (total_env_steps > 0) return total_env_steps;
    return task == "HB4" ? 25000 : 10000;
  }
  GridSpec grid() const { return GridSpec::preset(grid_preset); }
  void validate() const;
  std::string run_tag() const;
};

/// Canonical text form of a config; its hash is embedded in outputs.
std::string serialize_config(const ExperimentConfig& cfg);
uint64_t config_hash(const ExperimentConfig& cfg);

/// Flat key = value text with [section] headers.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config_text(const std::string& text);
void apply_config_line(ExperimentConfig& cfg, const std::string& section,
                       const std::string& key, const std::string& value);

struct MetricsRow {
  int env_step = 0;
  double success_rate = 0.0;
  double loss_xy = 0.0;
  double loss_theta = 0.0;
  double loss_margin = 0.0;
  double wall_time = 0.0;
  uint64_t seed = 0;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       uint64_t config_hash);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

struct AggregateRow {
  int env_step = 0;
  double success_mean = 0.0;
  double success_stderr = 0.0;
  double loss_xy_mean = 0.0;
  double loss_theta_mean = 0.0;
  double loss_margin_mean = 0.0;
  double wall_time_mean = 0.0;
  int n_seeds = 0;
};

std::vector<AggregateRow> aggregate_metrics(const std::vector<std::vector<MetricsRow>>& per_seed);
void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> read_aggregate_csv(const std::string& path);

/// Learning-curve image (SVG): one curve per aggregate file, shaded one
/// standard error.
void plot_curves(const std::string& out_svg, const std::vector<std::string>& labels,
                 const std::vector<std::vector<AggregateRow>>& curves);

struct RunResult {
  std::vector<MetricsRow> rows;
  std::string metrics_path;
};

/// Trains one seed end to end and writes its metrics file. Deterministic
/// for a fixed config + seed.
RunResult run_single_seed(const ExperimentConfig& cfg, uint64_t seed);

/// All seeds (optionally in parallel), then the aggregate file.
std::vector<RunResult> run_experiment(const ExperimentConfig& cfg);

/// Greedy evaluation of a saved run checkpoint (config is embedded in it).
double evaluate_checkpoint(const std::string& ckpt_path, const std::string& abstractor_path,
                           int episodes, uint64_t seed);

int cli_main(int argc, const char* const* argv);

}  // namespace leo
