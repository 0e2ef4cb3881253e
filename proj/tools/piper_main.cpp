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

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "piper/checks.hpp"
#include "piper/harness.hpp"

using namespace piper;

int main(int argc, char** argv) {
  CLI::App app{"piper2d: physics-regularized policy optimization testbed"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand(
      "train", "Train all seeds of an experiment config");
  std::string config_path, out_dir;
  train->add_option("--config", config_path, "experiment config JSON")
      ->required();
  train->add_option("--out", out_dir,
                    "output run directory (default: <run root>/<name>)");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a policy checkpoint");
  std::string ckpt_path;
  int episodes = 100;
  std::uint64_t eval_seed = 0;
  eval->add_option("--checkpoint", ckpt_path, "checkpoint.json path")
      ->required();
  eval->add_option("--episodes", episodes, "number of evaluation episodes");
  eval->add_option("--seed", eval_seed, "evaluation seed");

  // compare
  auto* compare = app.add_subcommand(
      "compare", "Compare a baseline run directory against a regularized one");
  std::string baseline_dir, piper_dir;
  bool as_json = false;
  compare->add_option("--baseline", baseline_dir, "baseline run directory")
      ->required();
  compare->add_option("--piper", piper_dir, "regularized run directory")
      ->required();
  compare->add_flag("--json", as_json, "emit the report as JSON");

  // dyncheck / gradcheck
  auto* dyn = app.add_subcommand(
      "dyncheck", "Run the dynamics/energy/friction/residual check suites");
  auto* grad = app.add_subcommand(
      "gradcheck", "Run finite-difference checks for every loss gradient");
  std::uint64_t check_seed = 42;
  dyn->add_option("--seed", check_seed, "random-state seed");
  grad->add_option("--seed", check_seed, "random-state seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto config = harness::ExperimentConfig::load(config_path);
      const std::string dir =
          out_dir.empty() ? harness::run_root() + "/" + config.name : out_dir;
      std::printf("training %s (%zu seeds) -> %s\n", config.name.c_str(),
                  config.seeds.size(), dir.c_str());
      const auto summary = harness::run_experiment(config, dir);
      for (const auto& s : summary.seeds) {
        if (s.diverged) {
          std::printf("seed %llu: FAILED (%s)\n",
                      static_cast<unsigned long long>(s.seed),
                      s.divergence_reason.c_str());
          continue;
        }
        std::printf(
            "seed %llu: final success %.2f, final error %.4f m, sigma %.2f\n",
            static_cast<unsigned long long>(s.seed),
            s.rows.empty() ? 0.0 : s.rows.back().success_rate,
            s.final_precision_m, s.sigma);
      }
      std::printf(
          "means: steps-to-90%% %.0f, steps-to-95%% %.0f, final error %.4f m, "
          "sigma %.2f\n",
          summary.mean_steps_to_90, summary.mean_steps_to_95,
          summary.mean_final_precision_m, summary.mean_sigma);
      return 0;
    }
    if (*eval) {
      const auto ckpt = harness::load_checkpoint(ckpt_path);
      const auto rep = harness::evaluate_checkpoint(ckpt, episodes, eval_seed);
      std::printf("episodes: %d\nsuccess_rate: %.4f\nmean_final_error_m: %.6f\n",
                  rep.episodes, rep.success_rate, rep.mean_final_error_m);
      return 0;
    }
    if (*compare) {
      const auto rep = harness::compare_runs(baseline_dir, piper_dir);
      std::cout << (as_json ? rep.to_json() : rep.to_text());
      return 0;
    }
    if (*dyn) {
      auto results = checks::dynamics_checks(check_seed);
      const auto energy = checks::energy_checks();
      const auto fric = checks::friction_checks();
      const auto res = checks::residual_checks(check_seed);
      results.insert(results.end(), energy.begin(), energy.end());
      results.insert(results.end(), fric.begin(), fric.end());
      results.insert(results.end(), res.begin(), res.end());
      checks::print_report(std::cout, results);
      return checks::all_pass(results) ? 0 : 1;
    }
    if (*grad) {
      const auto results = checks::gradient_checks(check_seed);
      checks::print_report(std::cout, results);
      return checks::all_pass(results) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
