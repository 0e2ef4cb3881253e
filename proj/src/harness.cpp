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

#include "piper/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace piper::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ContractViolation(path + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw ContractViolation(path + ": unknown key \"" + key + "\"");
  }
}

double num(const json& j, const std::string& path) {
  if (!j.is_number()) throw ContractViolation(path + ": expected a number");
  return j.get<double>();
}

long integer(const json& j, const std::string& path) {
  if (!j.is_number_integer())
    throw ContractViolation(path + ": expected an integer");
  return j.get<long>();
}

std::vector<int> int_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw ContractViolation(path + ": expected an array");
  std::vector<int> out;
  for (size_t i = 0; i < j.size(); ++i)
    out.push_back(static_cast<int>(
        integer(j[i], path + "[" + std::to_string(i) + "]")));
  return out;
}

}  // namespace

sim::EnvSpec env_spec_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ContractViolation(std::string("env: ") + e.what());
  }
  check_keys(j, "env",
             {"env_id", "n_links", "chain", "dt", "horizon", "reward_mode",
              "success_radius", "object_mass", "friction_mu", "goal_box",
              "contact_stiffness", "contact_damping", "v_stick",
              "object_radius", "g_normal", "reset_joint_range",
              "goal_offset_min", "goal_offset_max"});
  if (!j.contains("env_id"))
    throw ContractViolation("env.env_id: missing");
  const auto id = sim::env_id_from_string(j["env_id"].get<std::string>());
  const int n_links =
      j.contains("n_links")
          ? static_cast<int>(integer(j["n_links"], "env.n_links"))
          : 2;
  require(n_links >= 1, "env.n_links: must be >= 1");
  sim::EnvSpec spec = sim::EnvSpec::defaults(id, n_links);
  if (j.contains("chain")) spec.chain = parse_chain_model(j["chain"].dump());
  if (j.contains("dt")) spec.dt = num(j["dt"], "env.dt");
  require(spec.dt > 0.0, "env.dt: must be > 0");
  if (j.contains("horizon"))
    spec.horizon = static_cast<int>(integer(j["horizon"], "env.horizon"));
  require(spec.horizon >= 1, "env.horizon: must be >= 1");
  if (j.contains("reward_mode")) {
    const std::string m = j["reward_mode"].get<std::string>();
    if (m == "sparse")
      spec.reward_mode = sim::RewardMode::sparse;
    else if (m == "dense")
      spec.reward_mode = sim::RewardMode::dense;
    else
      throw ContractViolation("env.reward_mode: expected sparse|dense");
  }
  if (j.contains("success_radius"))
    spec.success_radius = num(j["success_radius"], "env.success_radius");
  if (j.contains("object_mass"))
    spec.object_mass = num(j["object_mass"], "env.object_mass");
  if (j.contains("friction_mu"))
    spec.friction_mu = num(j["friction_mu"], "env.friction_mu");
  require(spec.friction_mu >= 0.0, "env.friction_mu: must be >= 0");
  if (j.contains("goal_box")) {
    const auto& g = j["goal_box"];
    if (!g.is_array() || g.size() != 4)
      throw ContractViolation("env.goal_box: expected [lo_x, lo_y, hi_x, hi_y]");
    spec.goal_box_lo = Vec2(num(g[0], "env.goal_box[0]"),
                            num(g[1], "env.goal_box[1]"));
    spec.goal_box_hi = Vec2(num(g[2], "env.goal_box[2]"),
                            num(g[3], "env.goal_box[3]"));
  }
  if (j.contains("contact_stiffness"))
    spec.contact_stiffness = num(j["contact_stiffness"], "env.contact_stiffness");
  if (j.contains("contact_damping"))
    spec.contact_damping = num(j["contact_damping"], "env.contact_damping");
  if (j.contains("v_stick")) spec.v_stick = num(j["v_stick"], "env.v_stick");
  if (j.contains("object_radius"))
    spec.object_radius = num(j["object_radius"], "env.object_radius");
  if (j.contains("g_normal")) spec.g_normal = num(j["g_normal"], "env.g_normal");
  if (j.contains("reset_joint_range"))
    spec.reset_joint_range =
        num(j["reset_joint_range"], "env.reset_joint_range");
  if (j.contains("goal_offset_min"))
    spec.goal_offset_min = num(j["goal_offset_min"], "env.goal_offset_min");
  if (j.contains("goal_offset_max"))
    spec.goal_offset_max = num(j["goal_offset_max"], "env.goal_offset_max");
  return spec;
}

std::string env_spec_to_json(const sim::EnvSpec& spec) {
  json j;
  j["env_id"] = sim::to_string(spec.env_id);
  j["chain"] = json::parse(chain_model_to_json(spec.chain));
  j["dt"] = spec.dt;
  j["horizon"] = spec.horizon;
  j["reward_mode"] =
      spec.reward_mode == sim::RewardMode::sparse ? "sparse" : "dense";
  j["success_radius"] = spec.success_radius;
  j["object_mass"] = spec.object_mass;
  j["friction_mu"] = spec.friction_mu;
  j["goal_box"] = {spec.goal_box_lo.x(), spec.goal_box_lo.y(),
                   spec.goal_box_hi.x(), spec.goal_box_hi.y()};
  j["contact_stiffness"] = spec.contact_stiffness;
  j["contact_damping"] = spec.contact_damping;
  j["v_stick"] = spec.v_stick;
  j["object_radius"] = spec.object_radius;
  j["g_normal"] = spec.g_normal;
  j["reset_joint_range"] = spec.reset_joint_range;
  j["goal_offset_min"] = spec.goal_offset_min;
  j["goal_offset_max"] = spec.goal_offset_max;
  return j.dump();
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ContractViolation(std::string("config: ") + e.what());
  }
  check_keys(j, "config",
             {"name", "env", "algorithm", "piper", "weights", "total_steps",
              "eval_interval", "eval_episodes", "seeds", "networks", "ppo",
              "sac", "pinn", "action_repeat", "normalize_obs",
              "log_std_init"});
  ExperimentConfig cfg;
  if (j.contains("name")) cfg.name = j["name"].get<std::string>();
  if (!j.contains("env")) throw ContractViolation("config.env: missing");
  cfg.trainer.spec = env_spec_from_json_text(j["env"].dump());
  if (!j.contains("algorithm"))
    throw ContractViolation("config.algorithm: missing");
  cfg.trainer.algorithm = j["algorithm"].get<std::string>();
  require(cfg.trainer.algorithm == "ppo" || cfg.trainer.algorithm == "sac",
          "config.algorithm: expected ppo|sac");

  if (j.contains("weights")) {
    const auto& w = j["weights"];
    check_keys(w, "config.weights",
               {"lambda1", "lambda2", "lambda_f", "lambda_m", "lambda_g",
                "beta", "lambda_phys_ppo", "lambda_phys_sac"});
    auto& cw = cfg.trainer.weights;
    if (w.contains("lambda1")) cw.lambda1 = num(w["lambda1"], "weights.lambda1");
    if (w.contains("lambda2")) cw.lambda2 = num(w["lambda2"], "weights.lambda2");
    if (w.contains("lambda_f"))
      cw.lambda_f = num(w["lambda_f"], "weights.lambda_f");
    if (w.contains("lambda_m"))
      cw.lambda_m = num(w["lambda_m"], "weights.lambda_m");
    if (w.contains("lambda_g"))
      cw.lambda_g = num(w["lambda_g"], "weights.lambda_g");
    if (w.contains("beta")) cw.beta = num(w["beta"], "weights.beta");
    if (w.contains("lambda_phys_ppo"))
      cw.lambda_phys_ppo = num(w["lambda_phys_ppo"], "weights.lambda_phys_ppo");
    if (w.contains("lambda_phys_sac"))
      cw.lambda_phys_sac = num(w["lambda_phys_sac"], "weights.lambda_phys_sac");
    cw.validate();
  }

  bool lambda_given = false;
  if (j.contains("piper")) {
    const auto& p = j["piper"];
    check_keys(p, "config.piper",
               {"enabled", "lambda_phys", "penalty_use_mean_action"});
    if (p.contains("enabled"))
      cfg.trainer.piper_enabled = p["enabled"].get<bool>();
    if (p.contains("lambda_phys")) {
      cfg.trainer.lambda_phys = num(p["lambda_phys"], "piper.lambda_phys");
      require(cfg.trainer.lambda_phys >= 0.0,
              "piper.lambda_phys: must be >= 0");
      lambda_given = true;
    }
    if (p.contains("penalty_use_mean_action"))
      cfg.trainer.penalty_use_mean_action =
          p["penalty_use_mean_action"].get<bool>();
  }
  if (!lambda_given)
    cfg.trainer.lambda_phys = cfg.trainer.algorithm == "ppo"
                                  ? cfg.trainer.weights.lambda_phys_ppo
                                  : cfg.trainer.weights.lambda_phys_sac;

  if (j.contains("action_repeat"))
    cfg.trainer.action_repeat = static_cast<int>(
        integer(j["action_repeat"], "config.action_repeat"));
  require(cfg.trainer.action_repeat >= 1,
          "config.action_repeat: must be >= 1");
  if (j.contains("normalize_obs"))
    cfg.trainer.normalize_obs = j["normalize_obs"].get<bool>();
  if (j.contains("log_std_init"))
    cfg.trainer.log_std_init = num(j["log_std_init"], "config.log_std_init");
  if (j.contains("total_steps"))
    cfg.trainer.total_steps = integer(j["total_steps"], "config.total_steps");
  if (j.contains("eval_interval"))
    cfg.trainer.eval_interval =
        integer(j["eval_interval"], "config.eval_interval");
  if (j.contains("eval_episodes"))
    cfg.trainer.eval_episodes = static_cast<int>(
        integer(j["eval_episodes"], "config.eval_episodes"));
  require(cfg.trainer.total_steps > 0, "config.total_steps: must be > 0");
  require(cfg.trainer.eval_interval > 0, "config.eval_interval: must be > 0");
  require(cfg.trainer.eval_episodes > 0, "config.eval_episodes: must be > 0");

  if (j.contains("seeds")) {
    cfg.seeds.clear();
    if (!j["seeds"].is_array() || j["seeds"].empty())
      throw ContractViolation("config.seeds: expected a non-empty array");
    for (size_t i = 0; i < j["seeds"].size(); ++i)
      cfg.seeds.push_back(static_cast<std::uint64_t>(integer(
          j["seeds"][i], "config.seeds[" + std::to_string(i) + "]")));
  }

  if (j.contains("networks")) {
    const auto& n = j["networks"];
    check_keys(n, "config.networks", {"policy_hidden", "value_hidden"});
    if (n.contains("policy_hidden"))
      cfg.trainer.policy_hidden =
          int_list(n["policy_hidden"], "networks.policy_hidden");
    if (n.contains("value_hidden"))
      cfg.trainer.value_hidden =
          int_list(n["value_hidden"], "networks.value_hidden");
  }

  if (j.contains("ppo")) {
    const auto& p = j["ppo"];
    check_keys(p, "config.ppo",
               {"rollout_steps", "minibatch", "epochs", "gamma", "gae_lambda",
                "clip_eps", "c1", "c2", "lr", "lr_decay", "normalize_advantages"});
    auto& c = cfg.trainer.ppo;
    if (p.contains("rollout_steps"))
      c.rollout_steps = static_cast<int>(integer(p["rollout_steps"], "ppo.rollout_steps"));
    if (p.contains("minibatch"))
      c.minibatch = static_cast<int>(integer(p["minibatch"], "ppo.minibatch"));
    if (p.contains("epochs"))
      c.epochs = static_cast<int>(integer(p["epochs"], "ppo.epochs"));
    if (p.contains("gamma")) c.gamma = num(p["gamma"], "ppo.gamma");
    if (p.contains("gae_lambda"))
      c.gae_lambda = num(p["gae_lambda"], "ppo.gae_lambda");
    if (p.contains("clip_eps")) c.clip_eps = num(p["clip_eps"], "ppo.clip_eps");
    if (p.contains("c1")) c.c1 = num(p["c1"], "ppo.c1");
    if (p.contains("c2")) c.c2 = num(p["c2"], "ppo.c2");
    if (p.contains("lr")) c.lr = num(p["lr"], "ppo.lr");
    if (p.contains("lr_decay")) c.lr_decay = p["lr_decay"].get<bool>();
    if (p.contains("normalize_advantages"))
      c.normalize_advantages = p["normalize_advantages"].get<bool>();
  }

  if (j.contains("sac")) {
    const auto& s = j["sac"];
    check_keys(s, "config.sac",
               {"batch", "gamma", "tau_polyak", "lr", "alpha_lr",
                "init_alpha", "auto_alpha", "start_steps", "update_every",
                "updates_per_cycle", "replay_capacity"});
    auto& c = cfg.trainer.sac;
    if (s.contains("batch"))
      c.batch = static_cast<int>(integer(s["batch"], "sac.batch"));
    if (s.contains("gamma")) c.gamma = num(s["gamma"], "sac.gamma");
    if (s.contains("tau_polyak"))
      c.tau_polyak = num(s["tau_polyak"], "sac.tau_polyak");
    if (s.contains("lr")) c.lr = num(s["lr"], "sac.lr");
    if (s.contains("alpha_lr")) c.alpha_lr = num(s["alpha_lr"], "sac.alpha_lr");
    if (s.contains("init_alpha"))
      c.init_alpha = num(s["init_alpha"], "sac.init_alpha");
    if (s.contains("auto_alpha")) c.auto_alpha = s["auto_alpha"].get<bool>();
    if (s.contains("start_steps"))
      c.start_steps = static_cast<int>(integer(s["start_steps"], "sac.start_steps"));
    if (s.contains("update_every"))
      c.update_every = static_cast<int>(integer(s["update_every"], "sac.update_every"));
    if (s.contains("updates_per_cycle"))
      c.updates_per_cycle = static_cast<int>(
          integer(s["updates_per_cycle"], "sac.updates_per_cycle"));
    if (s.contains("replay_capacity"))
      c.replay_capacity = static_cast<size_t>(
          integer(s["replay_capacity"], "sac.replay_capacity"));
  }

  if (j.contains("pinn")) {
    const auto& p = j["pinn"];
    check_keys(p, "config.pinn",
               {"hidden", "lr", "batch", "update_every", "warmup_steps",
                "buffer_capacity", "contact_weight"});
    auto& c = cfg.trainer.pinn;
    if (p.contains("hidden")) c.hidden = int_list(p["hidden"], "pinn.hidden");
    if (p.contains("lr")) c.lr = num(p["lr"], "pinn.lr");
    if (p.contains("batch"))
      c.batch = static_cast<int>(integer(p["batch"], "pinn.batch"));
    if (p.contains("update_every"))
      c.update_every = static_cast<int>(integer(p["update_every"], "pinn.update_every"));
    if (p.contains("warmup_steps"))
      c.warmup_steps = static_cast<int>(integer(p["warmup_steps"], "pinn.warmup_steps"));
    if (p.contains("buffer_capacity"))
      c.buffer_capacity = static_cast<size_t>(
          integer(p["buffer_capacity"], "pinn.buffer_capacity"));
    if (p.contains("contact_weight"))
      c.contact_weight = num(p["contact_weight"], "pinn.contact_weight");
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractViolation("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["name"] = name;
  j["env"] = json::parse(env_spec_to_json(trainer.spec));
  j["algorithm"] = trainer.algorithm;
  j["piper"] = {{"enabled", trainer.piper_enabled},
                {"lambda_phys", trainer.lambda_phys},
                {"penalty_use_mean_action", trainer.penalty_use_mean_action}};
  j["weights"] = {{"lambda1", trainer.weights.lambda1},
                  {"lambda2", trainer.weights.lambda2},
                  {"lambda_f", trainer.weights.lambda_f},
                  {"lambda_m", trainer.weights.lambda_m},
                  {"lambda_g", trainer.weights.lambda_g},
                  {"beta", trainer.weights.beta},
                  {"lambda_phys_ppo", trainer.weights.lambda_phys_ppo},
                  {"lambda_phys_sac", trainer.weights.lambda_phys_sac}};
  j["action_repeat"] = trainer.action_repeat;
  j["normalize_obs"] = trainer.normalize_obs;
  j["log_std_init"] = trainer.log_std_init;
  j["total_steps"] = trainer.total_steps;
  j["eval_interval"] = trainer.eval_interval;
  j["eval_episodes"] = trainer.eval_episodes;
  j["seeds"] = seeds;
  j["networks"] = {{"policy_hidden", trainer.policy_hidden},
                   {"value_hidden", trainer.value_hidden}};
  j["ppo"] = {{"rollout_steps", trainer.ppo.rollout_steps},
              {"minibatch", trainer.ppo.minibatch},
              {"epochs", trainer.ppo.epochs},
              {"gamma", trainer.ppo.gamma},
              {"gae_lambda", trainer.ppo.gae_lambda},
              {"clip_eps", trainer.ppo.clip_eps},
              {"c1", trainer.ppo.c1},
              {"c2", trainer.ppo.c2},
              {"lr", trainer.ppo.lr},
              {"lr_decay", trainer.ppo.lr_decay},
              {"normalize_advantages", trainer.ppo.normalize_advantages}};
  j["sac"] = {{"batch", trainer.sac.batch},
              {"gamma", trainer.sac.gamma},
              {"tau_polyak", trainer.sac.tau_polyak},
              {"lr", trainer.sac.lr},
              {"alpha_lr", trainer.sac.alpha_lr},
              {"init_alpha", trainer.sac.init_alpha},
              {"auto_alpha", trainer.sac.auto_alpha},
              {"start_steps", trainer.sac.start_steps},
              {"update_every", trainer.sac.update_every},
              {"updates_per_cycle", trainer.sac.updates_per_cycle},
              {"replay_capacity", trainer.sac.replay_capacity}};
  j["pinn"] = {{"hidden", trainer.pinn.hidden},
               {"lr", trainer.pinn.lr},
               {"batch", trainer.pinn.batch},
               {"update_every", trainer.pinn.update_every},
               {"warmup_steps", trainer.pinn.warmup_steps},
               {"buffer_capacity", trainer.pinn.buffer_capacity},
               {"contact_weight", trainer.pinn.contact_weight}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

std::optional<long> steps_to_threshold(const std::vector<MetricsRow>& rows,
                                       double threshold) {
  for (const auto& row : rows)
    if (row.success_rate >= threshold) return row.step;
  return std::nullopt;
}

double final_precision(const std::vector<MetricsRow>& rows) {
  require(!rows.empty(), "final_precision: no rows");
  return rows.back().final_error_m;
}

double stability_sigma(const std::vector<int>& episode_successes,
                       int window) {
  require(window >= 1, "stability_sigma: window must be >= 1");
  if (episode_successes.empty()) return 0.0;
  const size_t n = episode_successes.size();
  const size_t start = n > static_cast<size_t>(window)
                           ? n - static_cast<size_t>(window)
                           : 0;
  double mean = 0.0;
  for (size_t i = start; i < n; ++i) mean += episode_successes[i];
  const double count = static_cast<double>(n - start);
  mean /= count;
  double var = 0.0;
  for (size_t i = start; i < n; ++i) {
    const double d = episode_successes[i] - mean;
    var += d * d;
  }
  var /= count;  // population variance
  return 100.0 * std::sqrt(var);
}

double efficiency_gain_percent(double steps_baseline, double steps_piper) {
  if (steps_baseline <= 0.0) return 0.0;
  return 100.0 * (steps_baseline - steps_piper) / steps_baseline;
}

double precision_gain_percent(double err_baseline, double err_piper) {
  if (err_baseline <= 0.0) return 0.0;
  return 100.0 * (err_baseline - err_piper) / err_baseline;
}

double stability_gain_percent(double sigma_baseline, double sigma_piper) {
  if (sigma_baseline <= 0.0) return sigma_piper <= sigma_baseline ? 0.0 : -100.0;
  return 100.0 * (sigma_baseline - sigma_piper) / sigma_baseline;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

static constexpr const char* kCsvHeader =
    "step,success_rate,final_error_m,l_phys,r_energy,pinn_loss,wall_secs";

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw InternalError("write_metrics_csv: cannot open " + path);
  out << kCsvHeader << "\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf),
                  "%ld,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", r.step,
                  r.success_rate, r.final_error_m, r.l_phys, r.r_energy,
                  r.pinn_loss, r.wall_secs);
    out << buf;
  }
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractViolation("read_metrics_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != kCsvHeader)
    throw ContractViolation("read_metrics_csv: unexpected header in " + path);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRow r;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf,%lf,%lf", &r.step,
                    &r.success_rate, &r.final_error_m, &r.l_phys,
                    &r.r_energy, &r.pinn_loss, &r.wall_secs) != 7)
      throw ContractViolation("read_metrics_csv: malformed row: " + line);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void write_checkpoint(const std::string& path, const sim::EnvSpec& spec,
                      const std::string& algorithm,
                      const ad::Network& policy_net, const VecX& tau_max,
                      const VecX& obs_mean, const VecX& obs_std) {
  json j;
  j["format"] = "piper2d-checkpoint";
  j["version"] = 1;
  j["algorithm"] = algorithm;
  j["env"] = json::parse(env_spec_to_json(spec));
  j["policy"] = json::parse(ad::network_to_json(policy_net));
  j["tau_max"] = std::vector<double>(tau_max.data(),
                                     tau_max.data() + tau_max.size());
  j["obs_mean"] = std::vector<double>(obs_mean.data(),
                                      obs_mean.data() + obs_mean.size());
  j["obs_std"] = std::vector<double>(obs_std.data(),
                                     obs_std.data() + obs_std.size());
  std::ofstream out(path);
  if (!out) throw InternalError("write_checkpoint: cannot open " + path);
  out << j.dump();
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractViolation("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ContractViolation(std::string("checkpoint: ") + e.what());
  }
  require(j.value("format", "") == "piper2d-checkpoint",
          "checkpoint: wrong format tag");
  require(j.value("version", 0) == 1, "checkpoint: unsupported version");
  const auto tau = j.at("tau_max").get<std::vector<double>>();
  const auto mean = j.at("obs_mean").get<std::vector<double>>();
  const auto std_dev = j.at("obs_std").get<std::vector<double>>();
  Checkpoint ckpt{env_spec_from_json_text(j.at("env").dump()),
                  j.at("algorithm").get<std::string>(),
                  rl::GaussianPolicy{
                      ad::network_from_json(j.at("policy").dump()),
                      Eigen::Map<const VecX>(tau.data(),
                                             static_cast<Index>(tau.size()))},
                  Eigen::Map<const VecX>(mean.data(),
                                         static_cast<Index>(mean.size())),
                  Eigen::Map<const VecX>(std_dev.data(),
                                         static_cast<Index>(std_dev.size()))};
  return ckpt;
}

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, int episodes,
                               std::uint64_t seed) {
  require(episodes >= 1, "evaluate_checkpoint: episodes must be >= 1");
  Rng rng = Rng(seed).split("cli_eval");
  EvalReport rep;
  rep.episodes = episodes;
  double err = 0.0;
  int ok = 0;
  for (int e = 0; e < episodes; ++e) {
    auto [world, goal] = sim::reset(ckpt.spec, rng.next_u64());
    bool failed = false;
    for (int k = 0; k < ckpt.spec.horizon; ++k) {
      const VecX obs = sim::observe(ckpt.spec, world, goal);
      const VecX obs_n =
          (obs - ckpt.obs_mean).cwiseQuotient(ckpt.obs_std);
      try {
        world =
            sim::step(ckpt.spec, world, ckpt.policy.mean_action(obs_n)).first;
      } catch (const SimulationDiverged&) {
        failed = true;
        break;
      }
    }
    if (!failed && sim::success(ckpt.spec, world, goal)) ++ok;
    err += failed ? ckpt.spec.chain.total_length()
                  : sim::final_error(ckpt.spec, world, goal);
  }
  rep.success_rate = static_cast<double>(ok) / episodes;
  rep.mean_final_error_m = err / episodes;
  return rep;
}

// ---------------------------------------------------------------------------
// Run orchestration
// ---------------------------------------------------------------------------

namespace {

SeedResult summarize_seed(std::uint64_t seed, const rl::TrainResult& tr,
                          long budget) {
  SeedResult out;
  out.seed = seed;
  out.diverged = tr.diverged;
  out.divergence_reason = tr.divergence_reason;
  for (const auto& ev : tr.evals) {
    MetricsRow row;
    row.step = ev.step;
    row.success_rate = ev.success_rate;
    row.final_error_m = ev.final_error;
    row.l_phys = ev.l_phys;
    row.r_energy = ev.r_energy;
    row.pinn_loss = ev.pinn_loss;
    row.wall_secs = ev.wall_secs;
    out.rows.push_back(row);
    out.success_history.insert(out.success_history.end(),
                               ev.episode_success.begin(),
                               ev.episode_success.end());
  }
  out.steps_to_95 = steps_to_threshold(out.rows, 0.95);
  out.steps_to_90 = steps_to_threshold(out.rows, 0.90);
  out.final_precision_m = out.rows.empty() ? 0.0 : final_precision(out.rows);
  out.sigma = stability_sigma(out.success_history, 100);
  (void)budget;
  return out;
}

json seed_summary_json(const SeedResult& s, long budget) {
  json j;
  j["seed"] = s.seed;
  j["diverged"] = s.diverged;
  if (s.diverged) j["divergence_reason"] = s.divergence_reason;
  j["steps_to_95"] = s.steps_to_95 ? json(*s.steps_to_95) : json(nullptr);
  j["steps_to_90"] = s.steps_to_90 ? json(*s.steps_to_90) : json(nullptr);
  j["final_precision_m"] = s.final_precision_m;
  j["sigma"] = s.sigma;
  j["budget_steps"] = budget;
  j["success_history"] = s.success_history;
  j["rows"] = s.rows.size();
  return j;
}

void aggregate(RunSummary& summary) {
  double n95 = 0, n90 = 0, prec = 0, sig = 0;
  int used = 0;
  for (const auto& s : summary.seeds) {
    if (s.diverged) continue;
    ++used;
    // Never-crossing seeds count as budget + 1.
    n95 += s.steps_to_95 ? static_cast<double>(*s.steps_to_95)
                         : static_cast<double>(summary.budget_steps + 1);
    n90 += s.steps_to_90 ? static_cast<double>(*s.steps_to_90)
                         : static_cast<double>(summary.budget_steps + 1);
    prec += s.final_precision_m;
    sig += s.sigma;
  }
  if (used > 0) {
    summary.mean_steps_to_95 = n95 / used;
    summary.mean_steps_to_90 = n90 / used;
    summary.mean_final_precision_m = prec / used;
    summary.mean_sigma = sig / used;
  }
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config,
                          const std::string& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream cfg_out(out_dir + "/config.json");
    cfg_out << config.to_json();
  }

  RunSummary summary;
  summary.name = config.name;
  summary.directory = out_dir;
  summary.budget_steps = config.trainer.total_steps;
  summary.seeds.resize(config.seeds.size());

  // Seeds run as isolated workers; each owns its nets and buffers.
  std::atomic<size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = cursor.fetch_add(1);
      if (i >= config.seeds.size()) return;
      const std::uint64_t seed = config.seeds[i];
      SeedResult sr;
      try {
        const rl::TrainResult tr = rl::train_run(config.trainer, seed);
        sr = summarize_seed(seed, tr, config.trainer.total_steps);
        const std::string seed_dir =
            out_dir + "/seed_" + std::to_string(seed);
        fs::create_directories(seed_dir);
        write_metrics_csv(seed_dir + "/metrics.csv", sr.rows);
        write_checkpoint(seed_dir + "/checkpoint.json", config.trainer.spec,
                         config.trainer.algorithm, tr.policy_net, tr.tau_max,
                         tr.obs_mean, tr.obs_std);
        std::ofstream sum(seed_dir + "/summary.json");
        sum << seed_summary_json(sr, config.trainer.total_steps).dump(2);
      } catch (const std::exception& e) {
        sr.seed = seed;
        sr.diverged = true;
        sr.divergence_reason = e.what();
      }
      summary.seeds[i] = std::move(sr);
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const size_t n_workers = std::min<size_t>(hw, config.seeds.size());
  std::vector<std::thread> threads;
  for (size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  for (auto& th : threads) th.join();

  aggregate(summary);
  json agg;
  agg["name"] = summary.name;
  agg["budget_steps"] = summary.budget_steps;
  agg["mean_steps_to_95"] = summary.mean_steps_to_95;
  agg["mean_steps_to_90"] = summary.mean_steps_to_90;
  agg["mean_final_precision_m"] = summary.mean_final_precision_m;
  agg["mean_sigma"] = summary.mean_sigma;
  agg["seeds"] = json::array();
  for (const auto& s : summary.seeds)
    agg["seeds"].push_back(seed_summary_json(s, summary.budget_steps));
  std::ofstream out(out_dir + "/summary.json");
  out << agg.dump(2);
  return summary;
}

RunSummary load_run(const std::string& dir) {
  require(fs::exists(dir + "/summary.json"),
          "load_run: no summary.json in " + dir);
  std::ifstream in(dir + "/summary.json");
  std::ostringstream ss;
  ss << in.rdbuf();
  const json agg = json::parse(ss.str());

  RunSummary summary;
  summary.name = agg.value("name", "");
  summary.directory = dir;
  summary.budget_steps = agg.value("budget_steps", 0L);
  for (const auto& js : agg.at("seeds")) {
    SeedResult s;
    s.seed = js.at("seed").get<std::uint64_t>();
    s.diverged = js.value("diverged", false);
    s.success_history = js.value("success_history", std::vector<int>{});
    // Re-derive the metric values from the raw CSV rather than trusting the
    // stored summary.
    const std::string csv =
        dir + "/seed_" + std::to_string(s.seed) + "/metrics.csv";
    if (fs::exists(csv)) {
      s.rows = read_metrics_csv(csv);
      s.steps_to_95 = steps_to_threshold(s.rows, 0.95);
      s.steps_to_90 = steps_to_threshold(s.rows, 0.90);
      s.final_precision_m = s.rows.empty() ? 0.0 : final_precision(s.rows);
    }
    s.sigma = stability_sigma(s.success_history, 100);
    summary.seeds.push_back(std::move(s));
  }
  aggregate(summary);
  return summary;
}

std::string CompareReport::to_json() const {
  json j;
  j["baseline"] = {{"steps_to_95", baseline_steps_to_95},
                   {"steps_to_90", baseline_steps_to_90},
                   {"final_precision_m", baseline_precision_m},
                   {"sigma", baseline_sigma}};
  j["piper"] = {{"steps_to_95", piper_steps_to_95},
                {"steps_to_90", piper_steps_to_90},
                {"final_precision_m", piper_precision_m},
                {"sigma", piper_sigma}};
  j["efficiency_gain_95_pct"] = efficiency_gain_95;
  j["efficiency_gain_90_pct"] = efficiency_gain_90;
  j["precision_gain_pct"] = precision_gain;
  j["stability_gain_pct"] = stability_gain;
  return j.dump(2);
}

std::string CompareReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "metric                baseline      regularized   gain\n"
                "steps-to-95%%         %12.1f  %12.1f  %+.1f%%\n"
                "steps-to-90%%         %12.1f  %12.1f  %+.1f%%\n"
                "final error [m]      %12.6f  %12.6f  %+.1f%%\n"
                "success sigma [pp]   %12.3f  %12.3f  %+.1f%%\n",
                baseline_steps_to_95, piper_steps_to_95, efficiency_gain_95,
                baseline_steps_to_90, piper_steps_to_90, efficiency_gain_90,
                baseline_precision_m, piper_precision_m, precision_gain,
                baseline_sigma, piper_sigma, stability_gain);
  return buf;
}

CompareReport compare_runs(const std::string& baseline_dir,
                           const std::string& piper_dir) {
  const RunSummary base = load_run(baseline_dir);
  const RunSummary pip = load_run(piper_dir);
  CompareReport rep;
  rep.baseline_steps_to_95 = base.mean_steps_to_95;
  rep.piper_steps_to_95 = pip.mean_steps_to_95;
  rep.baseline_steps_to_90 = base.mean_steps_to_90;
  rep.piper_steps_to_90 = pip.mean_steps_to_90;
  rep.baseline_precision_m = base.mean_final_precision_m;
  rep.piper_precision_m = pip.mean_final_precision_m;
  rep.baseline_sigma = base.mean_sigma;
  rep.piper_sigma = pip.mean_sigma;
  rep.efficiency_gain_95 =
      efficiency_gain_percent(rep.baseline_steps_to_95, rep.piper_steps_to_95);
  rep.efficiency_gain_90 =
      efficiency_gain_percent(rep.baseline_steps_to_90, rep.piper_steps_to_90);
  rep.precision_gain =
      precision_gain_percent(rep.baseline_precision_m, rep.piper_precision_m);
  rep.stability_gain =
      stability_gain_percent(rep.baseline_sigma, rep.piper_sigma);
  return rep;
}

std::string run_root() {
  const char* env = std::getenv("PIPER_RUN_ROOT");
  return env && *env ? env : "runs";
}

}  // namespace piper::harness
