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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "piper/harness.hpp"

using namespace piper;
using namespace piper::harness;
namespace fs = std::filesystem;

namespace {

const char* kGoodConfig = R"({
  "name": "smoke",
  "env": {"env_id": "reach2d", "n_links": 2, "horizon": 100},
  "algorithm": "ppo",
  "piper": {"enabled": true, "lambda_phys": 0.01},
  "total_steps": 2000,
  "eval_interval": 1000,
  "eval_episodes": 2,
  "seeds": [42, 43],
  "networks": {"policy_hidden": [16, 16], "value_hidden": [16, 16]},
  "ppo": {"rollout_steps": 512, "minibatch": 128, "epochs": 2},
  "pinn": {"hidden": [16, 16], "warmup_steps": 200, "update_every": 8,
           "batch": 32}
})";

std::string temp_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("piper2d_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

/// Builds a synthetic single-seed run directory whose metrics cross the 0.95
/// success threshold at `cross_step` and end at `final_err`.
void write_synthetic_run(const std::string& dir, long cross_step,
                         double final_err, double sigma_rate, long budget) {
  fs::create_directories(dir + "/seed_42");
  std::vector<MetricsRow> rows;
  for (long step = 0; step <= budget; step += budget / 10) {
    MetricsRow r;
    r.step = step;
    r.success_rate = step >= cross_step ? 1.0 : 0.5;
    r.final_error_m = final_err;
    rows.push_back(r);
  }
  // Force the exact crossing step.
  MetricsRow crossing;
  crossing.step = cross_step;
  crossing.success_rate = 0.95;
  crossing.final_error_m = final_err;
  rows.push_back(crossing);
  std::sort(rows.begin(), rows.end(),
            [](const MetricsRow& a, const MetricsRow& b) {
              return a.step < b.step;
            });
  write_metrics_csv(dir + "/seed_42/metrics.csv", rows);

  // Success history with the requested alternating fraction.
  std::vector<int> history;
  for (int i = 0; i < 200; ++i)
    history.push_back(i % 100 < static_cast<int>(sigma_rate * 100) ? 0 : 1);

  nlohmann::json seed;
  seed["seed"] = 42;
  seed["diverged"] = false;
  seed["success_history"] = history;
  nlohmann::json agg;
  agg["name"] = "synthetic";
  agg["budget_steps"] = budget;
  agg["seeds"] = nlohmann::json::array({seed});
  std::ofstream out(dir + "/summary.json");
  out << agg.dump();
}

}  // namespace

TEST_CASE("config: parses, defaults, and strict key rejection") {
  const auto cfg = ExperimentConfig::from_json_text(kGoodConfig);
  CHECK(cfg.name == "smoke");
  CHECK(cfg.trainer.algorithm == "ppo");
  CHECK(cfg.trainer.piper_enabled);
  CHECK(cfg.trainer.lambda_phys == doctest::Approx(0.01));
  CHECK(cfg.seeds == std::vector<std::uint64_t>{42, 43});
  CHECK(cfg.trainer.spec.horizon == 100);
  CHECK(cfg.trainer.ppo.rollout_steps == 512);

  // Round trip through to_json.
  const auto again = ExperimentConfig::from_json_text(cfg.to_json());
  CHECK(again.trainer.total_steps == cfg.trainer.total_steps);
  CHECK(again.trainer.spec.chain.n_links() == 2);

  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json_text(R"({"algorithm": "ppo"})"),
      doctest::Contains("env"), ContractViolation);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(
                           R"({"env": {"env_id": "reach2d"},
                               "algorithm": "ppo", "bogus": 1})"),
                       doctest::Contains("bogus"), ContractViolation);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(
                           R"({"env": {"env_id": "reach2d", "junk": 2},
                               "algorithm": "ppo"})"),
                       doctest::Contains("junk"), ContractViolation);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(
                           R"({"env": {"env_id": "reach2d"},
                               "algorithm": "ddpg"})"),
                       doctest::Contains("algorithm"), ContractViolation);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(
                           R"({"env": {"env_id": "reach2d"},
                               "algorithm": "ppo", "seeds": []})"),
                       doctest::Contains("seeds"), ContractViolation);
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(
                           R"({"env": {"env_id": "reach2d"},
                               "algorithm": "ppo", "total_steps": 0})"),
                       doctest::Contains("total_steps"), ContractViolation);
}

TEST_CASE("steps_to_threshold: crossing, never-crossing, synthetic fixtures") {
  std::vector<MetricsRow> rows;
  for (int k = 0; k < 6; ++k) {
    MetricsRow r;
    r.step = 1000 * k;
    r.success_rate = 0.2 * k;  // 0.0, 0.2, ..., 1.0
    rows.push_back(r);
  }
  CHECK(steps_to_threshold(rows, 0.95).value() == 5000);
  CHECK(steps_to_threshold(rows, 0.60).value() == 3000);
  CHECK_FALSE(steps_to_threshold(rows, 1.01).has_value());
  CHECK(steps_to_threshold({}, 0.95) == std::nullopt);
}

TEST_CASE("final_precision: last checkpoint value") {
  std::vector<MetricsRow> rows(3);
  rows[0].final_error_m = 0.5;
  rows[1].final_error_m = 0.2;
  rows[2].final_error_m = 0.07;
  CHECK(final_precision(rows) == doctest::Approx(0.07));
  rows.resize(1);
  CHECK(final_precision(rows) == doctest::Approx(0.5));
  std::vector<MetricsRow> zero(1);
  CHECK(final_precision(zero) == 0.0);
}

TEST_CASE("stability_sigma: boundary fixtures and brute-force agreement") {
  // All-success window.
  std::vector<int> all_ok(150, 1);
  CHECK(stability_sigma(all_ok, 100) == doctest::Approx(0.0));
  // Alternating 0/1: Bernoulli(1/2) population sigma = 0.5 -> 50 points.
  std::vector<int> alternating;
  for (int i = 0; i < 200; ++i) alternating.push_back(i % 2);
  CHECK(stability_sigma(alternating, 100) == doctest::Approx(50.0));

  // Random fixture vs the direct formula over the final window.
  Rng rng(5);
  std::vector<int> random_hist;
  for (int i = 0; i < 340; ++i)
    random_hist.push_back(rng.uniform01() < 0.7 ? 1 : 0);
  double mean = 0.0;
  for (int i = 240; i < 340; ++i) mean += random_hist[i];
  mean /= 100.0;
  double var = 0.0;
  for (int i = 240; i < 340; ++i)
    var += (random_hist[i] - mean) * (random_hist[i] - mean);
  var /= 100.0;
  CHECK(stability_sigma(random_hist, 100) ==
        doctest::Approx(100.0 * std::sqrt(var)));

  // Shorter histories use everything available.
  std::vector<int> brief{1, 0, 1, 1};
  double m2 = 3.0 / 4.0;
  double v2 = (3 * (1 - m2) * (1 - m2) + m2 * m2) / 4.0;
  CHECK(stability_sigma(brief, 100) == doctest::Approx(100.0 * std::sqrt(v2)));
}

TEST_CASE("gain arithmetic reproduces the published reference numbers") {
  // 46,650 -> 32,800 steps is a ~30% efficiency gain.
  const double eff = efficiency_gain_percent(46650.0, 32800.0);
  CHECK(std::abs(eff - 30.0) <= 0.5);  // rounds to 30
  // 7.55 mm -> 2.15 mm is a 71.5% precision gain.
  const double prec = precision_gain_percent(7.55, 2.15);
  CHECK(std::abs(prec - 71.5) <= 0.05);
  // Identical runs: all gains zero.
  CHECK(efficiency_gain_percent(1000.0, 1000.0) == 0.0);
  CHECK(precision_gain_percent(0.5, 0.5) == 0.0);
  CHECK(stability_gain_percent(10.0, 10.0) == 0.0);
  // Stability: 14.3 -> 7.7 is about 46%.
  CHECK(stability_gain_percent(14.3, 7.7) == doctest::Approx(46.15).epsilon(0.01));
}

TEST_CASE("compare_runs: end-to-end over synthetic run directories") {
  const std::string base_dir = temp_dir("cmp_base");
  const std::string piper_dir = temp_dir("cmp_piper");
  write_synthetic_run(base_dir, 46650, 0.00755, 0.0, 100000);
  write_synthetic_run(piper_dir, 32800, 0.00215, 0.0, 100000);
  const auto rep = compare_runs(base_dir, piper_dir);
  CHECK(rep.baseline_steps_to_95 == doctest::Approx(46650));
  CHECK(rep.piper_steps_to_95 == doctest::Approx(32800));
  CHECK(std::abs(rep.efficiency_gain_95 - 30.0) <= 0.5);
  CHECK(std::abs(rep.precision_gain - 71.5) <= 0.05);
  // Identical directories compare to zero gains.
  const auto same = compare_runs(base_dir, base_dir);
  CHECK(same.efficiency_gain_95 == 0.0);
  CHECK(same.precision_gain == 0.0);
  CHECK(same.stability_gain == 0.0);
  fs::remove_all(base_dir);
  fs::remove_all(piper_dir);
}

TEST_CASE("metrics csv: write/read round trip and schema stability") {
  const std::string dir = temp_dir("csv");
  std::vector<MetricsRow> rows(3);
  rows[0] = {0, 0.0, 0.531, 0.1, 0.01, 12.5, 0.0};
  rows[1] = {1000, 0.45, 0.21, 0.05, 0.004, 3.25, 10.5};
  rows[2] = {2000, 0.9, 0.043, 0.01, 0.001, 0.75, 21.25};
  write_metrics_csv(dir + "/metrics.csv", rows);

  std::ifstream in(dir + "/metrics.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "step,success_rate,final_error_m,l_phys,r_energy,pinn_loss,wall_secs");

  const auto back = read_metrics_csv(dir + "/metrics.csv");
  REQUIRE(back.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].step == rows[i].step);
    CHECK(back[i].success_rate == doctest::Approx(rows[i].success_rate));
    CHECK(back[i].final_error_m == doctest::Approx(rows[i].final_error_m));
    CHECK(back[i].wall_secs == doctest::Approx(rows[i].wall_secs));
  }
  fs::remove_all(dir);
}

TEST_CASE("run_experiment: smoke run, artifacts, and determinism") {
  const auto cfg = ExperimentConfig::from_json_text(kGoodConfig);
  const std::string dir_a = temp_dir("run_a");
  const std::string dir_b = temp_dir("run_b");
  const auto sum_a = run_experiment(cfg, dir_a);
  const auto sum_b = run_experiment(cfg, dir_b);

  REQUIRE(sum_a.seeds.size() == 2);
  for (const auto& s : sum_a.seeds) {
    CHECK_FALSE(s.diverged);
    CHECK(s.rows.size() >= 2);  // at least initial and final evaluations
    // Rows monotone in step.
    for (size_t i = 1; i < s.rows.size(); ++i)
      CHECK(s.rows[i].step > s.rows[i - 1].step);
  }
  CHECK(fs::exists(dir_a + "/summary.json"));
  CHECK(fs::exists(dir_a + "/config.json"));

  // Determinism: identical rows per seed across invocations, wall clock
  // aside.
  for (std::uint64_t seed : {42ULL, 43ULL}) {
    const auto rows_a = read_metrics_csv(dir_a + "/seed_" +
                                         std::to_string(seed) + "/metrics.csv");
    const auto rows_b = read_metrics_csv(dir_b + "/seed_" +
                                         std::to_string(seed) + "/metrics.csv");
    REQUIRE(rows_a.size() == rows_b.size());
    for (size_t i = 0; i < rows_a.size(); ++i) {
      CHECK(rows_a[i].step == rows_b[i].step);
      CHECK(rows_a[i].success_rate == rows_b[i].success_rate);
      CHECK(rows_a[i].final_error_m == rows_b[i].final_error_m);
      CHECK(rows_a[i].l_phys == rows_b[i].l_phys);
      CHECK(rows_a[i].r_energy == rows_b[i].r_energy);
      CHECK(rows_a[i].pinn_loss == rows_b[i].pinn_loss);
    }
  }

  // load_run recomputes the same aggregates from the raw artifacts.
  const auto loaded = load_run(dir_a);
  CHECK(loaded.mean_final_precision_m ==
        doctest::Approx(sum_a.mean_final_precision_m));
  CHECK(loaded.mean_sigma == doctest::Approx(sum_a.mean_sigma));

  // Checkpoint round trip and deterministic evaluation.
  const auto ckpt = load_checkpoint(dir_a + "/seed_42/checkpoint.json");
  CHECK(ckpt.algorithm == "ppo");
  CHECK(ckpt.spec.chain.n_links() == 2);
  const auto ev1 = evaluate_checkpoint(ckpt, 5, 7);
  const auto ev2 = evaluate_checkpoint(ckpt, 5, 7);
  CHECK(ev1.success_rate == ev2.success_rate);
  CHECK(ev1.mean_final_error_m == ev2.mean_final_error_m);

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("run root honors the environment variable") {
  setenv("PIPER_RUN_ROOT", "/tmp/piper_custom_root", 1);
  CHECK(run_root() == "/tmp/piper_custom_root");
  unsetenv("PIPER_RUN_ROOT");
  CHECK(run_root() == "runs");
}
