// Copyright 2026 The piper2d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Experiment runner: JSON experiment configs, seeded multi-run training with
// per-seed metrics.csv / checkpoint.json / summary.json artifacts, the
// summary metrics (steps-to-threshold, final precision, success stability),
// and baseline-vs-regularized comparison reports.

#ifndef PIPER_HARNESS_HPP_
#define PIPER_HARNESS_HPP_

#include <optional>
#include <string>
#include <vector>

#include "piper/rl.hpp"

namespace piper::harness {

/// One metrics.csv row. Columns, in order:
///   step, success_rate, final_error_m, l_phys, r_energy, pinn_loss,
///   wall_secs
struct MetricsRow {
  long step = 0;
  double success_rate = 0.0;
  double final_error_m = 0.0;
  double l_phys = 0.0;
  double r_energy = 0.0;
  double pinn_loss = 0.0;
  double wall_secs = 0.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  rl::TrainerConfig trainer;
  std::vector<std::uint64_t> seeds = {42, 43, 44, 45, 46};

  /// Strict parser: unknown keys anywhere are rejected with a
  /// field-identifying message.
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::string to_json() const;
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string divergence_reason;
  std::vector<MetricsRow> rows;
  std::vector<int> success_history;  // per-episode 0/1 across all evals
  std::optional<long> steps_to_95;
  std::optional<long> steps_to_90;
  double final_precision_m = 0.0;
  double sigma = 0.0;
};

struct RunSummary {
  std::string name;
  std::string directory;
  std::vector<SeedResult> seeds;

  /// Seed means over non-diverged seeds; steps-to-threshold means count a
  /// never-crossing seed as budget + 1 (documented convention).
  double mean_steps_to_95 = 0.0;
  double mean_steps_to_90 = 0.0;
  double mean_final_precision_m = 0.0;
  double mean_sigma = 0.0;
  long budget_steps = 0;
};

/// Trains every seed (concurrently, zero shared state), writes
/// out_dir/seed_<s>/{metrics.csv, checkpoint.json, summary.json} plus an
/// aggregate out_dir/summary.json, and returns the summary.
RunSummary run_experiment(const ExperimentConfig& config,
                          const std::string& out_dir);

/// First step whose evaluation success rate reaches the threshold.
std::optional<long> steps_to_threshold(const std::vector<MetricsRow>& rows,
                                       double threshold = 0.95);

/// Mean final error at the last evaluation checkpoint.
double final_precision(const std::vector<MetricsRow>& rows);

/// Population standard deviation of the final `window` per-episode success
/// indicators, in percentage points.
double stability_sigma(const std::vector<int>& episode_successes,
                       int window = 100);

// Gain arithmetic, each as percentage improvement over the baseline.
double efficiency_gain_percent(double steps_baseline, double steps_piper);
double precision_gain_percent(double err_baseline, double err_piper);
double stability_gain_percent(double sigma_baseline, double sigma_piper);

struct CompareReport {
  double baseline_steps_to_95 = 0.0, piper_steps_to_95 = 0.0;
  double baseline_steps_to_90 = 0.0, piper_steps_to_90 = 0.0;
  double baseline_precision_m = 0.0, piper_precision_m = 0.0;
  double baseline_sigma = 0.0, piper_sigma = 0.0;
  double efficiency_gain_95 = 0.0;
  double efficiency_gain_90 = 0.0;
  double precision_gain = 0.0;
  double stability_gain = 0.0;
  std::string to_json() const;
  std::string to_text() const;
};

/// Recomputes both run summaries from their on-disk per-seed artifacts and
/// reports the paper-style percentage gains.
CompareReport compare_runs(const std::string& baseline_dir,
                           const std::string& piper_dir);

/// Reads a run directory back into a summary (re-deriving the per-seed
/// metrics from metrics.csv and the stored success histories).
RunSummary load_run(const std::string& dir);

// CSV io. write/read are inverse up to float formatting (%.12g).
void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// Self-contained policy checkpoint: environment spec, policy network, and
// the observation normalization the policy was trained with.
struct Checkpoint {
  sim::EnvSpec spec;
  std::string algorithm;
  rl::GaussianPolicy policy;
  VecX obs_mean;
  VecX obs_std;
};
void write_checkpoint(const std::string& path, const sim::EnvSpec& spec,
                      const std::string& algorithm,
                      const ad::Network& policy_net, const VecX& tau_max,
                      const VecX& obs_mean, const VecX& obs_std);
Checkpoint load_checkpoint(const std::string& path);

struct EvalReport {
  int episodes = 0;
  double success_rate = 0.0;
  double mean_final_error_m = 0.0;
};
EvalReport evaluate_checkpoint(const Checkpoint& ckpt, int episodes,
                               std::uint64_t seed);

/// Environment spec <-> JSON (full fidelity, used by configs/checkpoints).
sim::EnvSpec env_spec_from_json_text(const std::string& text);
std::string env_spec_to_json(const sim::EnvSpec& spec);

/// Run-directory root: $PIPER_RUN_ROOT when set, else "runs".
std::string run_root();

}  // namespace piper::harness

#endif  // PIPER_HARNESS_HPP_
