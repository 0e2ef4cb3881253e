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
// PPO and SAC actor-critic trainers with an optional physics penalty
// lambda_phys * ||M(q) Phi(s, pi(s)) + b - pi(s)||^2 added to the actor
// objective. With lambda_phys = 0 (or the penalty disabled) the update path
// is bit-identical to the unregularized algorithm: the penalty graph is
// never built and all random streams are split per component.

#ifndef PIPER_RL_HPP_
#define PIPER_RL_HPP_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "piper/autodiff.hpp"
#include "piper/buffer.hpp"
#include "piper/physics_losses.hpp"
#include "piper/pinn.hpp"
#include "piper/sim.hpp"

namespace piper::rl {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// tanh-squashed diagonal Gaussian policy scaled to the torque limits.
/// The network maps obs -> (mean, log_std), each of dimension N.
struct GaussianPolicy {
  ad::Network net;
  VecX tau_max;

  static GaussianPolicy make(int obs_dim, int n_act,
                             const std::vector<int>& hidden,
                             const VecX& tau_max, Rng& rng,
                             double log_std_init = 0.0);

  int n_act() const { return static_cast<int>(tau_max.size()); }

  struct Sample {
    VecX action;     // squashed and scaled
    VecX presquash;  // u, before tanh
    double log_prob;
  };

  Sample sample(const VecX& obs, Rng& rng) const;
  /// Deterministic action tanh(mean) .* tau_max.
  VecX mean_action(const VecX& obs) const;
  /// Log-density of the action identified by its presquash u, including the
  /// tanh-and-scale change of variables.
  double log_prob(const VecX& obs, const VecX& presquash) const;
};

/// Normalized advantages (zero mean, unit variance); a positive-affine map,
/// so per-state action preferences are preserved.
VecX normalize_advantages(const VecX& adv);

/// Generalized advantage estimation over a rollout that may span several
/// episodes. values/next_values hold V(s_t) and V(s_{t+1}) per step;
/// episode_end marks truncation boundaries (advantage accumulation stops,
/// the value bootstrap still applies); terminal marks true termination
/// (zero bootstrap). Returns advantages and returns (adv + V).
struct GaeResult {
  VecX advantages;
  VecX returns;
};
GaeResult gae_advantages(const VecX& rewards, const VecX& values,
                         const VecX& next_values,
                         const std::vector<bool>& episode_end,
                         const std::vector<bool>& terminal, double gamma,
                         double lambda);

/// Column batch for the physics penalty: raw observations (PINN input),
/// policy-side observations (normalized when the trainer normalizes), and
/// the stored oracle terms at the same states.
struct PenaltyBatch {
  ad::Mat obs;         // raw, fed to the PINN
  ad::Mat obs_policy;  // fed to the policy; defaults to obs when empty
  std::vector<MatX> M;
  ad::Mat b;
};

PenaltyBatch make_penalty_batch(const ReplayBuffer& buffer,
                                const std::vector<size_t>& idx);

/// L_phys = mean_j || M_j Phi(s_j, a_j) + b_j - a_j ||^2 with a = pi(s) (the
/// deterministic mean action by default). Gradients flow to the policy only;
/// the PINN is frozen. Returns the unweighted penalty value and accumulates
/// weight * dL/dtheta into policy_sink when given.
double piper_penalty(const GaussianPolicy& policy, const pinn::PinnModel& pinn,
                     const PenaltyBatch& batch, ad::Gradients* policy_sink,
                     double weight = 1.0);

struct PpoConfig {
  int rollout_steps = 2048;
  int minibatch = 256;
  int epochs = 10;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double c1 = 0.5;  // value loss coefficient
  double c2 = 0.0;  // entropy bonus coefficient
  double lr = 3e-4;
  bool lr_decay = false;  // anneal lr linearly to zero over total_steps
  bool normalize_advantages = true;
};

struct SacConfig {
  int batch = 2048;
  double gamma = 0.99;
  double tau_polyak = 0.005;
  double lr = 3e-4;
  double alpha_lr = 3e-4;
  double init_alpha = 0.2;
  bool auto_alpha = true;  // tune toward target entropy -N
  int start_steps = 1000;
  int update_every = 2;
  int updates_per_cycle = 1;
  size_t replay_capacity = 1000000;
};

struct PinnCadence {
  std::vector<int> hidden = {64, 64};
  double lr = 1e-3;
  int batch = 128;
  int update_every = 1;     // env steps between PINN updates
  int warmup_steps = 1000;  // env steps before PINN training starts
  size_t buffer_capacity = 200000;
  double contact_weight = 0.5;
};

struct TrainerConfig {
  sim::EnvSpec spec = sim::EnvSpec::defaults(sim::EnvId::reach2d, 2);
  std::string algorithm = "ppo";  // ppo | sac
  bool piper_enabled = false;
  double lambda_phys = 0.0;  // used only when piper_enabled
  bool penalty_use_mean_action = true;
  bool normalize_obs = true;   // running mean/std over observations
  double log_std_init = -0.5;  // initial log-std head bias
  /// Simulator substeps per policy action. The physics always advances at
  /// spec.dt; the policy holds each torque for this many substeps. Oracle
  /// labels (M, b, qdd_obs, tau_eff) are taken on the first substep, where
  /// the integrator identity is exact. total_steps, eval_interval, and the
  /// buffers all count policy interactions.
  int action_repeat = 10;
  phys::ConstraintWeights weights;
  long total_steps = 100000;
  long eval_interval = 4000;
  int eval_episodes = 100;
  std::vector<int> policy_hidden = {64, 64};
  std::vector<int> value_hidden = {64, 64};
  PpoConfig ppo;
  SacConfig sac;
  PinnCadence pinn;
};

/// One evaluation checkpoint. episode_success holds the per-episode 0/1
/// outcomes, in order.
struct EvalPoint {
  long step = 0;
  double success_rate = 0.0;
  double final_error = 0.0;
  double l_phys = 0.0;
  double r_energy = 0.0;
  double pinn_loss = 0.0;
  double wall_secs = 0.0;
  std::vector<int> episode_success;
};

struct TrainResult {
  std::vector<EvalPoint> evals;
  bool diverged = false;
  std::string divergence_reason;
  long steps_done = 0;
  ad::Network policy_net;
  VecX tau_max;
  VecX obs_mean;  // observation normalization at the end of training
  VecX obs_std;
  std::optional<pinn::PinnModel> pinn_model;
  /// FNV-1a over every applied action byte; equal checksums mean identical
  /// training trajectories.
  std::uint64_t action_checksum = 0;
};

/// Trains one seed to completion. Throws TrainingDiverged only for
/// unrecoverable setup errors; in-run divergence is reported via the result.
TrainResult train_run(const TrainerConfig& cfg, std::uint64_t seed);

// --- exposed for unit tests ---

struct SacNets {
  GaussianPolicy policy;
  ad::Network q1, q2, q1_target, q2_target;
  double log_alpha = 0.0;
  ad::AdamState policy_adam, q1_adam, q2_adam;
};

SacNets make_sac_nets(int obs_dim, int n_act,
                      const std::vector<int>& policy_hidden,
                      const std::vector<int>& critic_hidden,
                      const VecX& tau_max, double lr, double init_alpha,
                      Rng& rng);

struct SacBatch {
  ad::Mat obs;
  ad::Mat actions;
  VecX rewards;
  ad::Mat next_obs;
  VecX terminal;  // 1.0 where the bootstrap is cut
};

struct SacLossReport {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double penalty = 0.0;
  double alpha = 0.0;
  double mean_log_prob = 0.0;
  double mean_q_target = 0.0;
};

struct PpoBatch {
  ad::Mat obs;                    // policy/value observations
  ad::Mat presquash;              // stored pre-squash actions u
  Eigen::RowVectorXd logp_old;
  Eigen::RowVectorXd advantages;
  Eigen::RowVectorXd returns;
};

struct PpoLossReport {
  double clip_objective = 0.0;
  double value_loss = 0.0;
  double penalty = 0.0;
  double mean_ratio = 0.0;
};

/// One clipped-surrogate minibatch update of policy and value nets (plus the
/// physics penalty when penalty_batch is non-null). Throws TrainingDiverged
/// on non-finite losses.
PpoLossReport ppo_update(GaussianPolicy& policy, ad::Network& value_net,
                         ad::AdamState& policy_adam, ad::AdamState& value_adam,
                         const PpoBatch& batch, const PpoConfig& cfg,
                         double lambda_phys, const PenaltyBatch* penalty_batch,
                         const pinn::PinnModel* pinn_model);

/// One SAC update: twin critic TD step with min-target and entropy term,
/// reparameterized actor step (plus the physics penalty when penalty_batch
/// is non-null), alpha adaptation, Polyak target update.
SacLossReport sac_update(SacNets& nets, const SacBatch& batch,
                         const SacConfig& cfg, double lambda_phys,
                         const PenaltyBatch* penalty_batch,
                         const pinn::PinnModel* pinn_model,
                         bool penalty_use_mean_action, Rng& noise_rng);

}  // namespace piper::rl

#endif  // PIPER_RL_HPP_
