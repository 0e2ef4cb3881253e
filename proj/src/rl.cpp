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

#include "piper/rl.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <tuple>

#include "piper/dynamics.hpp"
#include "piper/loss_graphs.hpp"
#include "piper/oracle.hpp"

namespace piper::rl {

using ad::Gradients;
using ad::Mat;
using ad::Tape;
using ad::Value;

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;  // log(2 pi)

double log1m_tanh_sq(double x) {
  // log(1 - tanh^2 x) = 2 (log 2 - x - softplus(-2x)), stable for large |x|.
  const double sp = std::max(-2.0 * x, 0.0) +
                    std::log1p(std::exp(-std::abs(2.0 * x)));
  return 2.0 * (std::log(2.0) - x - sp);
}

}  // namespace

GaussianPolicy GaussianPolicy::make(int obs_dim, int n_act,
                                    const std::vector<int>& hidden,
                                    const VecX& tau_max, Rng& rng,
                                    double log_std_init) {
  require(tau_max.size() == n_act, "GaussianPolicy: tau_max size mismatch");
  std::vector<int> sizes;
  sizes.push_back(obs_dim);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(2 * n_act);
  GaussianPolicy p{ad::Network::init(sizes, ad::Activation::tanh, rng),
                   tau_max};
  p.net.b.back().tail(n_act).array() = log_std_init;
  return p;
}

GaussianPolicy::Sample GaussianPolicy::sample(const VecX& obs,
                                              Rng& rng) const {
  const int n = n_act();
  const VecX out = net.forward(obs);
  Sample s;
  s.presquash.resize(n);
  s.action.resize(n);
  double logp = 0.0;
  for (int i = 0; i < n; ++i) {
    const double mean = out(i);
    const double log_std =
        std::clamp(out(n + i), kLogStdMin, kLogStdMax);
    const double std = std::exp(log_std);
    const double zeta = rng.normal();
    const double u = mean + std * zeta;
    s.presquash(i) = u;
    s.action(i) = std::tanh(u) * tau_max(i);
    logp += -0.5 * zeta * zeta - log_std - 0.5 * kLogTwoPi -
            std::log(tau_max(i)) - log1m_tanh_sq(u);
  }
  s.log_prob = logp;
  return s;
}

VecX GaussianPolicy::mean_action(const VecX& obs) const {
  const int n = n_act();
  const VecX out = net.forward(obs);
  VecX a(n);
  for (int i = 0; i < n; ++i) a(i) = std::tanh(out(i)) * tau_max(i);
  return a;
}

double GaussianPolicy::log_prob(const VecX& obs, const VecX& presquash) const {
  const int n = n_act();
  require(presquash.size() == n, "log_prob: presquash size mismatch");
  const VecX out = net.forward(obs);
  double logp = 0.0;
  for (int i = 0; i < n; ++i) {
    const double mean = out(i);
    const double log_std =
        std::clamp(out(n + i), kLogStdMin, kLogStdMax);
    const double z = (presquash(i) - mean) * std::exp(-log_std);
    logp += -0.5 * z * z - log_std - 0.5 * kLogTwoPi -
            std::log(tau_max(i)) - log1m_tanh_sq(presquash(i));
  }
  return logp;
}

VecX normalize_advantages(const VecX& adv) {
  const double mean = adv.mean();
  const double var = (adv.array() - mean).square().mean();
  return (adv.array() - mean) / (std::sqrt(var) + 1e-8);
}

GaeResult gae_advantages(const VecX& rewards, const VecX& values,
                         const VecX& next_values,
                         const std::vector<bool>& episode_end,
                         const std::vector<bool>& terminal, double gamma,
                         double lambda) {
  const Index T = rewards.size();
  require(values.size() == T && next_values.size() == T,
          "gae: value arrays must have T entries");
  require(static_cast<Index>(episode_end.size()) == T &&
              static_cast<Index>(terminal.size()) == T,
          "gae: flag arrays must have T entries");
  GaeResult out;
  out.advantages.resize(T);
  out.returns.resize(T);
  double running = 0.0;
  for (Index t = T - 1; t >= 0; --t) {
    const double v_next = terminal[t] ? 0.0 : next_values(t);
    const double delta = rewards(t) + gamma * v_next - values(t);
    running = episode_end[t] ? delta : delta + gamma * lambda * running;
    out.advantages(t) = running;
    out.returns(t) = running + values(t);
  }
  return out;
}

PenaltyBatch make_penalty_batch(const ReplayBuffer& buffer,
                                const std::vector<size_t>& idx) {
  require(!idx.empty(), "make_penalty_batch: empty index set");
  const Index obs_dim = buffer.at(idx[0]).obs.size();
  const Index n = buffer.at(idx[0]).action.size();
  PenaltyBatch pb;
  pb.obs.resize(obs_dim, static_cast<Index>(idx.size()));
  pb.b.resize(n, static_cast<Index>(idx.size()));
  pb.M.reserve(idx.size());
  for (size_t j = 0; j < idx.size(); ++j) {
    const auto& rec = buffer.at(idx[j]);
    pb.obs.col(static_cast<Index>(j)) = rec.obs;
    pb.b.col(static_cast<Index>(j)) = rec.b;
    pb.M.push_back(rec.M);
  }
  return pb;
}

namespace {

struct PolicyHead {
  Value mean;
  Value log_std;
  Value inv_std;
};

PolicyHead policy_head(Tape& t, const GaussianPolicy& pol, Value obs,
                       Gradients* sink) {
  Value out = ad::mlp(t, pol.net, obs, sink);
  const int n = pol.n_act();
  PolicyHead h;
  h.mean = ad::slice_rows(t, out, 0, n);
  h.log_std = ad::clamp(t, ad::slice_rows(t, out, n, n), kLogStdMin,
                        kLogStdMax);
  h.inv_std = ad::exp_(t, ad::neg(t, h.log_std));
  return h;
}

Value log1m_tanh_sq_node(Tape& t, Value u) {
  Value sp = ad::softplus(t, ad::scale(t, u, -2.0));
  return ad::scale(
      t, ad::add_scalar(t, ad::neg(t, ad::add(t, u, sp)), std::log(2.0)),
      2.0);
}

/// Log-density row (1 x B) of stored presquash actions under the current
/// head. The tanh/scale corrections depend only on the stored u and fold
/// into a constant row.
Value logp_of_stored(Tape& t, const PolicyHead& h, const Mat& u,
                     const VecX& tau_max) {
  Value z = ad::hadamard(t, ad::sub(t, t.constant(u), h.mean), h.inv_std);
  Value per_dim =
      ad::sub(t, ad::scale(t, ad::square(t, z), -0.5), h.log_std);
  Value row = ad::colwise_sum(t, per_dim);
  const Index n = u.rows();
  Eigen::RowVectorXd corr(u.cols());
  for (Index j = 0; j < u.cols(); ++j) {
    double c = -0.5 * static_cast<double>(n) * kLogTwoPi;
    for (Index i = 0; i < n; ++i)
      c -= std::log(tau_max(i)) + log1m_tanh_sq(u(i, j));
    corr(j) = c;
  }
  Mat corr_mat(1, u.cols());
  corr_mat.row(0) = corr;
  return ad::add(t, row, t.constant(corr_mat));
}

struct Reparam {
  Value action;    // squashed, scaled
  Value logp_row;  // 1 x B
};

Reparam reparam_sample(Tape& t, const PolicyHead& h, const Mat& zeta,
                       const VecX& tau_max) {
  const Index n = zeta.rows();
  Value std_v = ad::exp_(t, h.log_std);
  Value u = ad::add(t, h.mean, ad::hadamard(t, std_v, t.constant(zeta)));
  Value a = ad::affine_rows(t, ad::tanh_(t, u), tau_max,
                            VecX::Zero(tau_max.size()));
  // (u - mean)/std == zeta by construction.
  Mat zsq = (-0.5 * zeta.array().square()).matrix();
  Value per_dim =
      ad::sub(t, ad::sub(t, t.constant(zsq), h.log_std),
              log1m_tanh_sq_node(t, u));
  Value row = ad::colwise_sum(t, per_dim);
  double c = -0.5 * static_cast<double>(n) * kLogTwoPi;
  for (Index i = 0; i < n; ++i) c -= std::log(tau_max(i));
  Reparam r;
  r.action = a;
  r.logp_row = ad::add_scalar(t, row, c);
  return r;
}

/// mean_j ||M_j Phi(s_j, a_j) + b_j - a_j||^2 with the action value given.
Value penalty_from_action(Tape& t, Value action, Value obs_const,
                          const PenaltyBatch& pb,
                          const pinn::PinnModel& pm) {
  Value raw_in = ad::concat_rows(t, obs_const, action);
  Value qdd_hat = pinn::forward_node(t, pm, raw_in, nullptr);  // frozen
  Value r = lg::residual_node(t, pb.M, pb.b, qdd_hat, action);
  return lg::mean_sq_colnorm(t, r);
}

Value penalty_from_mean(Tape& t, const PolicyHead& h, Value obs_const,
                        const PenaltyBatch& pb, const pinn::PinnModel& pm,
                        const VecX& tau_max) {
  Value a = ad::affine_rows(t, ad::tanh_(t, h.mean), tau_max,
                            VecX::Zero(tau_max.size()));
  return penalty_from_action(t, a, obs_const, pb, pm);
}

}  // namespace

double piper_penalty(const GaussianPolicy& policy, const pinn::PinnModel& pinn,
                     const PenaltyBatch& batch, ad::Gradients* policy_sink,
                     double weight) {
  Tape t;
  Value obs_raw = t.constant(batch.obs);
  Value obs_pol = batch.obs_policy.size() > 0 ? t.constant(batch.obs_policy)
                                              : obs_raw;
  PolicyHead h = policy_head(t, policy, obs_pol, policy_sink);
  Value pen = penalty_from_mean(t, h, obs_raw, batch, pinn, policy.tau_max);
  t.backward(pen, Mat::Constant(1, 1, weight));
  return t.scalar(pen);
}

// ---------------------------------------------------------------------------
// PPO update
// ---------------------------------------------------------------------------

PpoLossReport ppo_update(GaussianPolicy& policy, ad::Network& value_net,
                         ad::AdamState& policy_adam, ad::AdamState& value_adam,
                         const PpoBatch& batch, const PpoConfig& cfg,
                         double lambda_phys, const PenaltyBatch* penalty_batch,
                         const pinn::PinnModel* pinn_model) {
  const Index count = batch.obs.cols();
  const int n = policy.n_act();
  Tape t;
  Gradients pg = Gradients::zeros_like(policy.net);
  Gradients vg = Gradients::zeros_like(value_net);
  Value obs_v = t.constant(batch.obs);
  PolicyHead h = policy_head(t, policy, obs_v, &pg);
  Value logp = logp_of_stored(t, h, batch.presquash, policy.tau_max);
  Mat logp_old_row(1, count);
  logp_old_row.row(0) = batch.logp_old;
  Value ratio = ad::exp_(t, ad::sub(t, logp, t.constant(logp_old_row)));
  Mat adv_row(1, count);
  adv_row.row(0) = batch.advantages;
  Value adv_c = t.constant(adv_row);
  Value surr1 = ad::hadamard(t, ratio, adv_c);
  Value surr2 = ad::hadamard(
      t, ad::clamp(t, ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv_c);
  Value l_clip = ad::mean_all(t, ad::cwise_min(t, surr1, surr2));

  Value v_pred = ad::mlp(t, value_net, obs_v, &vg);
  Mat ret_row(1, count);
  ret_row.row(0) = batch.returns;
  Value l_vf = ad::mean_all(
      t, ad::square(t, ad::sub(t, v_pred, t.constant(ret_row))));

  Value total =
      ad::add(t, ad::scale(t, l_clip, -1.0), ad::scale(t, l_vf, cfg.c1));
  if (cfg.c2 != 0.0) {
    Value ent_row = ad::colwise_sum(t, h.log_std);
    Value entropy = ad::add_scalar(t, ad::mean_all(t, ent_row),
                                   0.5 * n * (1.0 + kLogTwoPi));
    total = ad::add(t, total, ad::scale(t, entropy, -cfg.c2));
  }
  Value pen{-1};
  if (lambda_phys > 0.0 && penalty_batch && pinn_model) {
    Value obs_raw_v = t.constant(penalty_batch->obs);
    pen = penalty_from_mean(t, h, obs_raw_v, *penalty_batch, *pinn_model,
                            policy.tau_max);
    total = ad::add(t, total, ad::scale(t, pen, lambda_phys));
  }
  t.backward(total);
  if (!std::isfinite(t.scalar(total)) || !pg.allFinite() || !vg.allFinite())
    throw TrainingDiverged("ppo_update: non-finite loss or gradients");
  ad::adam_step(policy.net, pg, policy_adam);
  ad::adam_step(value_net, vg, value_adam);

  PpoLossReport report;
  report.clip_objective = t.scalar(l_clip);
  report.value_loss = t.scalar(l_vf);
  report.penalty = pen.idx >= 0 ? t.scalar(pen) : 0.0;
  report.mean_ratio = t.val(ratio).mean();
  return report;
}

// ---------------------------------------------------------------------------
// SAC update
// ---------------------------------------------------------------------------

SacNets make_sac_nets(int obs_dim, int n_act,
                      const std::vector<int>& policy_hidden,
                      const std::vector<int>& critic_hidden,
                      const VecX& tau_max, double lr, double init_alpha,
                      Rng& rng) {
  Rng pol_rng = rng.split("sac_policy");
  Rng q1_rng = rng.split("sac_q1");
  Rng q2_rng = rng.split("sac_q2");
  std::vector<int> critic_sizes;
  critic_sizes.push_back(obs_dim + n_act);
  for (int h : critic_hidden) critic_sizes.push_back(h);
  critic_sizes.push_back(1);

  SacNets nets{
      GaussianPolicy::make(obs_dim, n_act, policy_hidden, tau_max, pol_rng),
      ad::Network::init(critic_sizes, ad::Activation::relu, q1_rng),
      ad::Network::init(critic_sizes, ad::Activation::relu, q2_rng),
      {}, {},
      std::log(init_alpha),
      {}, {}, {}};
  nets.q1_target = nets.q1;
  nets.q2_target = nets.q2;
  nets.policy_adam = ad::AdamState::make(nets.policy.net, lr);
  nets.q1_adam = ad::AdamState::make(nets.q1, lr);
  nets.q2_adam = ad::AdamState::make(nets.q2, lr);
  return nets;
}

namespace {

void polyak_update(ad::Network& target, const ad::Network& online,
                   double tau) {
  for (size_t i = 0; i < target.W.size(); ++i) {
    target.W[i] = (1.0 - tau) * target.W[i] + tau * online.W[i];
    target.b[i] = (1.0 - tau) * target.b[i] + tau * online.b[i];
  }
}

Mat stack_obs_action(const Mat& obs, const Mat& act) {
  Mat X(obs.rows() + act.rows(), obs.cols());
  X.topRows(obs.rows()) = obs;
  X.bottomRows(act.rows()) = act;
  return X;
}

}  // namespace

SacLossReport sac_update(SacNets& nets, const SacBatch& batch,
                         const SacConfig& cfg, double lambda_phys,
                         const PenaltyBatch* penalty_batch,
                         const pinn::PinnModel* pinn_model,
                         bool penalty_use_mean_action, Rng& noise_rng) {
  const Index B = batch.obs.cols();
  const int n = nets.policy.n_act();
  const double alpha = std::exp(nets.log_alpha);
  SacLossReport report;
  report.alpha = alpha;

  // Target value: y = r + gamma (1 - terminal) (min Q'(s', a') - alpha log pi).
  Mat zeta_next(n, B);
  for (Index i = 0; i < zeta_next.size(); ++i)
    zeta_next.data()[i] = noise_rng.normal();
  VecX y(B);
  {
    const Mat head = nets.policy.net.forward_batch(batch.next_obs);
    Mat a_next(n, B);
    VecX logp_next(B);
    for (Index j = 0; j < B; ++j) {
      double lp = -0.5 * n * kLogTwoPi;
      for (int i = 0; i < n; ++i) {
        const double mean = head(i, j);
        const double log_std =
            std::clamp(head(n + i, j), kLogStdMin, kLogStdMax);
        const double u = mean + std::exp(log_std) * zeta_next(i, j);
        a_next(i, j) = std::tanh(u) * nets.policy.tau_max(i);
        lp += -0.5 * zeta_next(i, j) * zeta_next(i, j) - log_std -
              std::log(nets.policy.tau_max(i)) - log1m_tanh_sq(u);
      }
      logp_next(j) = lp;
    }
    const Mat xq = stack_obs_action(batch.next_obs, a_next);
    const Mat q1t = nets.q1_target.forward_batch(xq);
    const Mat q2t = nets.q2_target.forward_batch(xq);
    for (Index j = 0; j < B; ++j) {
      const double min_q = std::min(q1t(0, j), q2t(0, j));
      y(j) = batch.rewards(j) +
             cfg.gamma * (1.0 - batch.terminal(j)) *
                 (min_q - alpha * logp_next(j));
    }
    report.mean_q_target = y.mean();
  }

  // Critic step: joint MSE of both critics against y.
  {
    Tape t;
    Gradients g1 = Gradients::zeros_like(nets.q1);
    Gradients g2 = Gradients::zeros_like(nets.q2);
    Value xq = t.constant(stack_obs_action(batch.obs, batch.actions));
    Value q1 = ad::mlp(t, nets.q1, xq, &g1);
    Value q2 = ad::mlp(t, nets.q2, xq, &g2);
    Mat y_row(1, B);
    y_row.row(0) = y.transpose();
    Value target = t.constant(y_row);
    Value loss =
        ad::add(t, ad::mean_all(t, ad::square(t, ad::sub(t, q1, target))),
                ad::mean_all(t, ad::square(t, ad::sub(t, q2, target))));
    t.backward(loss);
    report.critic_loss = t.scalar(loss);
    if (!std::isfinite(report.critic_loss) || !g1.allFinite() ||
        !g2.allFinite())
      throw TrainingDiverged("sac_update: non-finite critic loss");
    ad::adam_step(nets.q1, g1, nets.q1_adam);
    ad::adam_step(nets.q2, g2, nets.q2_adam);
  }

  // Actor step: alpha log pi - min Q + physics penalty, critics frozen.
  Mat zeta(n, B);
  for (Index i = 0; i < zeta.size(); ++i) zeta.data()[i] = noise_rng.normal();
  {
    Tape t;
    Gradients pg = Gradients::zeros_like(nets.policy.net);
    Value obs = t.constant(batch.obs);
    PolicyHead h = policy_head(t, nets.policy, obs, &pg);
    Reparam rp = reparam_sample(t, h, zeta, nets.policy.tau_max);
    Value xq = ad::concat_rows(t, obs, rp.action);
    Value q1 = ad::mlp(t, nets.q1, xq, nullptr);
    Value q2 = ad::mlp(t, nets.q2, xq, nullptr);
    Value min_q = ad::cwise_min(t, q1, q2);
    Value actor = ad::mean_all(
        t, ad::sub(t, ad::scale(t, rp.logp_row, alpha), min_q));
    Value total = actor;
    Value pen{-1};
    if (lambda_phys > 0.0 && penalty_batch && pinn_model) {
      pen = penalty_use_mean_action
                ? penalty_from_mean(t, h, obs, *penalty_batch, *pinn_model,
                                    nets.policy.tau_max)
                : penalty_from_action(t, rp.action, obs, *penalty_batch,
                                      *pinn_model);
      total = ad::add(t, total, ad::scale(t, pen, lambda_phys));
    }
    t.backward(total);
    report.actor_loss = t.scalar(actor);
    report.penalty = pen.idx >= 0 ? t.scalar(pen) : 0.0;
    report.mean_log_prob = t.val(rp.logp_row).mean();
    if (!std::isfinite(t.scalar(total)) || !pg.allFinite())
      throw TrainingDiverged("sac_update: non-finite actor loss");
    ad::adam_step(nets.policy.net, pg, nets.policy_adam);
  }

  // Temperature: descent on -log_alpha (E[log pi] + H_target), i.e. alpha
  // grows while the policy entropy sits below the target -N.
  if (cfg.auto_alpha) {
    const double target_entropy = -static_cast<double>(n);
    nets.log_alpha += cfg.alpha_lr * (report.mean_log_prob + target_entropy);
    nets.log_alpha = std::clamp(nets.log_alpha, -10.0, 3.0);
  }

  polyak_update(nets.q1_target, nets.q1, cfg.tau_polyak);
  polyak_update(nets.q2_target, nets.q2, cfg.tau_polyak);
  return report;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

struct StepOutcome {
  TransitionRecord record;
  bool episode_ended = false;
  bool diverged = false;
};

/// Advances the environment by one policy action (held for action_repeat
/// simulator substeps) and assembles the full transition record. Oracle
/// labels come from the first substep, where the finite-difference
/// acceleration inverts the integrator exactly.
StepOutcome collect_step(const sim::EnvSpec& spec, sim::WorldState& world,
                         Vec2& goal, int& steps_in_episode,
                         const VecX& action, int action_repeat) {
  StepOutcome out;
  const sim::WorldState before = world;
  const VecX obs = sim::observe(spec, world, goal);
  try {
    auto [next, rec] = sim::step(spec, world, action);
    const VecX tau_clipped = action.cwiseMin(spec.chain.torque_limit())
                                 .cwiseMax(-spec.chain.torque_limit());
    TransitionRecord& r = out.record;
    r.obs = obs;
    r.action = tau_clipped;
    r.goal = goal;
    const auto s = oracle::sample_transition(spec, before, rec, next.arm.qd);
    r.M = s.M;
    r.b = s.b;
    r.tau_ext = s.tau_ext;
    r.qdd_obs = s.qdd_obs;
    r.tau_eff = s.tau_eff;
    r.contact_flagged = s.contact_flagged;
    r.qd = before.arm.qd;
    r.gravity = gravity_vector(spec.chain, before.arm.q);
    r.m_rate = mass_matrix_rate(
        s.M, mass_matrix(spec.chain, next.arm.q), spec.dt);
    ++steps_in_episode;
    for (int sub = 1;
         sub < action_repeat && steps_in_episode < spec.horizon; ++sub) {
      auto [more, rec2] = sim::step(spec, next, action);
      next = more;
      if (rec2.normal_force > 0.0) r.contact_flagged = true;
      ++steps_in_episode;
    }
    r.reward = sim::reward(spec, next, goal);
    r.next_obs = sim::observe(spec, next, goal);
    world = next;
    if (steps_in_episode >= spec.horizon) {
      r.done = true;
      out.episode_ended = true;
    }
  } catch (const SimulationDiverged&) {
    out.diverged = true;
    out.episode_ended = true;
  }
  return out;
}

/// Running observation statistics shared by the actor and critic inputs.
/// Identity when disabled.
struct ObsNormalizer {
  pinn::Normalizer stats;
  bool enabled = false;
  explicit ObsNormalizer(int dim, bool on) : stats(dim), enabled(on) {}
  void observe(const VecX& obs) {
    if (enabled) stats.observe(obs);
  }
  VecX apply(const VecX& obs) const {
    return enabled ? stats.apply(obs) : obs;
  }
  Mat apply_batch(const Mat& obs) const {
    return enabled ? stats.apply_batch(obs) : obs;
  }
  VecX mean(int dim) const {
    return enabled ? stats.mean() : VecX::Zero(dim);
  }
  VecX stddev(int dim) const {
    return enabled ? stats.stddev() : VecX::Ones(dim);
  }
};

std::uint64_t fnv_accumulate(std::uint64_t h, const VecX& v) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
  for (Index i = 0; i < v.size() * static_cast<Index>(sizeof(double)); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Evaluator {
 public:
  Evaluator(const TrainerConfig& cfg, Rng eval_rng)
      : cfg_(cfg), eval_rng_(eval_rng) {}

  EvalPoint run(const GaussianPolicy& policy, const ObsNormalizer& obs_norm,
                long step, int eval_index, double wall_secs, double l_phys,
                double r_energy, double pinn_loss) {
    EvalPoint pt;
    pt.step = step;
    pt.wall_secs = wall_secs;
    pt.l_phys = l_phys;
    pt.r_energy = r_energy;
    pt.pinn_loss = pinn_loss;
    Rng ep_rng = eval_rng_.split(static_cast<std::uint64_t>(eval_index));
    double err_sum = 0.0;
    for (int e = 0; e < cfg_.eval_episodes; ++e) {
      const std::uint64_t seed = ep_rng.next_u64();
      auto [world, goal] = sim::reset(cfg_.spec, seed);
      bool failed = false;
      for (int k = 0; k < cfg_.spec.horizon && !failed;) {
        const VecX obs = sim::observe(cfg_.spec, world, goal);
        const VecX a = policy.mean_action(obs_norm.apply(obs));
        for (int sub = 0; sub < cfg_.action_repeat && k < cfg_.spec.horizon;
             ++sub, ++k) {
          try {
            world = sim::step(cfg_.spec, world, a).first;
          } catch (const SimulationDiverged&) {
            failed = true;
            break;
          }
        }
      }
      const bool ok = !failed && sim::success(cfg_.spec, world, goal);
      pt.episode_success.push_back(ok ? 1 : 0);
      err_sum += failed ? cfg_.spec.chain.total_length()
                        : sim::final_error(cfg_.spec, world, goal);
    }
    pt.success_rate =
        static_cast<double>(std::accumulate(pt.episode_success.begin(),
                                            pt.episode_success.end(), 0)) /
        std::max<size_t>(1, pt.episode_success.size());
    pt.final_error = err_sum / std::max(1, cfg_.eval_episodes);
    return pt;
  }

 private:
  const TrainerConfig& cfg_;
  Rng eval_rng_;
};

/// Mean physics penalty and energy residual over a seeded buffer probe,
/// using the current PINN (penalty) and observed accelerations (energy).
struct BufferMetrics {
  double l_phys = 0.0;
  double r_energy = 0.0;
};

BufferMetrics buffer_metrics(const ReplayBuffer& buffer,
                             const GaussianPolicy& policy,
                             const ObsNormalizer& obs_norm,
                             const pinn::PinnModel* pinn_model, Rng& rng) {
  BufferMetrics m;
  if (buffer.empty()) return m;
  const size_t count = std::min<size_t>(256, buffer.size());
  const auto idx = buffer.sample_indices(count, rng);
  double pen = 0.0, energy = 0.0;
  for (size_t i : idx) {
    const auto& rec = buffer.at(i);
    phys::EnergyInputs ein{rec.qd,      rec.M,      rec.m_rate,
                           rec.gravity, rec.qdd_obs, rec.action};
    energy += phys::energy_residual(ein);
    if (pinn_model) {
      const VecX a = policy.mean_action(obs_norm.apply(rec.obs));
      const VecX qdd_hat = pinn_model->predict_accel(rec.obs, a);
      pen += phys::physics_penalty(
          phys::physics_residual({rec.M, rec.b, qdd_hat, a}));
    }
  }
  m.l_phys = pen / static_cast<double>(count);
  m.r_energy = energy / static_cast<double>(count);
  return m;
}

struct PinnRuntime {
  pinn::PinnModel model;
  pinn::PinnTrainState state;
  double last_loss = 0.0;
};

}  // namespace

// --------------------------------- PPO ------------------------------------

namespace {

TrainResult train_ppo(const TrainerConfig& cfg, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const Rng root(seed);
  Rng env_rng = root.split("env");
  Rng expl_rng = root.split("exploration");
  Rng pol_rng = root.split("policy_init");
  Rng val_rng = root.split("value_init");
  Rng shuffle_rng = root.split("ppo_shuffle");
  Rng pinn_init_rng = root.split("pinn_init");
  Rng pinn_batch_rng = root.split("pinn_batch");
  Rng metrics_rng = root.split("metrics");

  const sim::EnvSpec& spec = cfg.spec;
  const int obs_dim = sim::observation_dim(spec);
  const int n = spec.chain.n_links();

  GaussianPolicy policy =
      GaussianPolicy::make(obs_dim, n, cfg.policy_hidden,
                           spec.chain.torque_limit(), pol_rng,
                           cfg.log_std_init);
  std::vector<int> vsizes;
  vsizes.push_back(obs_dim);
  for (int h : cfg.value_hidden) vsizes.push_back(h);
  vsizes.push_back(1);
  ad::Network value_net =
      ad::Network::init(vsizes, ad::Activation::tanh, val_rng);
  ad::AdamState policy_adam = ad::AdamState::make(policy.net, cfg.ppo.lr);
  ad::AdamState value_adam = ad::AdamState::make(value_net, cfg.ppo.lr);
  ObsNormalizer obs_norm(obs_dim, cfg.normalize_obs);

  std::optional<PinnRuntime> coach;
  if (cfg.piper_enabled) {
    coach.emplace(PinnRuntime{
        pinn::PinnModel::make(obs_dim, n, cfg.pinn.hidden, pinn_init_rng),
        {}, 0.0});
    coach->state.adam = ad::AdamState::make(coach->model.net, cfg.pinn.lr);
    coach->state.beta = cfg.weights.beta;
    coach->state.beta_e = spec.has_object() ? cfg.weights.beta : 0.0;
    coach->state.batch_size = cfg.pinn.batch;
    coach->state.contact_weight = cfg.pinn.contact_weight;
    coach->state.energy_terms = spec.has_object();
  }
  ReplayBuffer pinn_buffer(cfg.pinn.buffer_capacity);

  TrainResult result;
  result.tau_max = spec.chain.torque_limit();
  Evaluator evaluator(cfg, root.split("eval"));
  int eval_index = 0;
  long next_eval = 0;

  auto wall = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t0)
        .count();
  };
  long last_eval_step = -1;
  auto run_eval = [&](long step) {
    const BufferMetrics bm =
        buffer_metrics(pinn_buffer, policy, obs_norm,
                       coach ? &coach->model : nullptr, metrics_rng);
    result.evals.push_back(evaluator.run(policy, obs_norm, step, eval_index++,
                                         wall(), bm.l_phys, bm.r_energy,
                                         coach ? coach->last_loss : 0.0));
    last_eval_step = step;
    while (next_eval <= step) next_eval += cfg.eval_interval;
  };
  auto maybe_eval = [&](long step) {
    if (step >= next_eval || last_eval_step < 0) run_eval(step);
  };

  auto [world, goal] = sim::reset(spec, env_rng.next_u64());
  int steps_in_episode = 0;
  long steps = 0;
  int divergences = 0;

  const int T = cfg.ppo.rollout_steps;
  while (steps < cfg.total_steps && !result.diverged) {
    maybe_eval(steps);
    // Rollout storage; observations are stored post-normalization so the
    // ratio uses exactly the statistics seen at collection time.
    Mat obs_buf(obs_dim, T), u_buf(n, T), next_obs_buf(obs_dim, T);
    VecX rew(T), logp_old(T);
    std::vector<bool> ep_end(T, false), terminal(T, false);
    std::vector<TransitionRecord> records(T);

    for (int k = 0; k < T; ++k) {
      const VecX obs_raw = sim::observe(spec, world, goal);
      obs_norm.observe(obs_raw);
      const VecX obs_n = obs_norm.apply(obs_raw);
      const auto s = policy.sample(obs_n, expl_rng);
      StepOutcome oc = collect_step(spec, world, goal, steps_in_episode,
                                    s.action, cfg.action_repeat);
      if (oc.diverged) {
        ++divergences;
        if (divergences > 50) {
          result.diverged = true;
          result.divergence_reason = "simulation diverged repeatedly";
          break;
        }
        std::tie(world, goal) = sim::reset(spec, env_rng.next_u64());
        steps_in_episode = 0;
        --k;
        continue;
      }
      result.action_checksum =
          fnv_accumulate(result.action_checksum ^ 0xcbf29ce484222325ULL,
                         oc.record.action);
      obs_buf.col(k) = obs_n;
      u_buf.col(k) = s.presquash;
      logp_old(k) = s.log_prob;
      rew(k) = oc.record.reward;
      next_obs_buf.col(k) = obs_norm.apply(oc.record.next_obs);
      ep_end[k] = oc.episode_ended;
      records[k] = oc.record;
      if (cfg.piper_enabled) {
        if (!coach->model.norm.frozen()) {
          VecX x(obs_dim + n);
          x << oc.record.obs, oc.record.action;
          coach->model.norm.observe(x);
          coach->model.out_norm.observe(oc.record.qdd_obs);
        }
        pinn_buffer.push(oc.record);
        if (steps >= cfg.pinn.warmup_steps &&
            steps % cfg.pinn.update_every == 0) {
          const auto rep = pinn_update(coach->model, pinn_buffer,
                                       coach->state, pinn_batch_rng);
          if (rep) coach->last_loss = rep->total;
        }
      }
      ++steps;
      if (oc.episode_ended) {
        std::tie(world, goal) = sim::reset(spec, env_rng.next_u64());
        steps_in_episode = 0;
      }
      if (steps >= cfg.total_steps) {
        if (k + 1 < T) {
          obs_buf.conservativeResize(obs_dim, k + 1);
          u_buf.conservativeResize(n, k + 1);
          next_obs_buf.conservativeResize(obs_dim, k + 1);
          rew.conservativeResize(k + 1);
          logp_old.conservativeResize(k + 1);
          ep_end.resize(k + 1);
          terminal.resize(k + 1);
          records.resize(k + 1);
        }
        break;
      }
    }
    if (result.diverged) break;
    const Index Tr = rew.size();
    if (Tr == 0) break;
    if (cfg.ppo.lr_decay) {
      const double frac =
          1.0 - static_cast<double>(steps) / static_cast<double>(
                                                 cfg.total_steps);
      policy_adam.lr = cfg.ppo.lr * std::max(frac, 0.05);
      value_adam.lr = policy_adam.lr;
    }

    // Values and GAE.
    const Mat v_now = value_net.forward_batch(obs_buf);
    const Mat v_next = value_net.forward_batch(next_obs_buf);
    VecX values(Tr), next_values(Tr);
    for (Index k = 0; k < Tr; ++k) {
      values(k) = v_now(0, k);
      next_values(k) = v_next(0, k);
    }
    const GaeResult gae = gae_advantages(rew, values, next_values, ep_end,
                                         terminal, cfg.ppo.gamma,
                                         cfg.ppo.gae_lambda);
    const VecX& ret = gae.returns;
    const VecX adv_n = cfg.ppo.normalize_advantages
                           ? normalize_advantages(gae.advantages)
                           : gae.advantages;

    // Epochs over shuffled minibatches.
    std::vector<int> order(Tr);
    for (Index i = 0; i < Tr; ++i) order[i] = static_cast<int>(i);
    for (int epoch = 0; epoch < cfg.ppo.epochs; ++epoch) {
      for (Index i = Tr - 1; i > 0; --i) {
        const Index j =
            static_cast<Index>(shuffle_rng.uniform_index(i + 1));
        std::swap(order[i], order[j]);
      }
      for (Index start = 0; start < Tr; start += cfg.ppo.minibatch) {
        const Index count = std::min<Index>(cfg.ppo.minibatch, Tr - start);
        Mat mb_obs(obs_dim, count), mb_u(n, count);
        Eigen::RowVectorXd mb_adv(count), mb_ret(count), mb_logp(count);
        PenaltyBatch pb;
        const bool with_pen = cfg.piper_enabled && cfg.lambda_phys > 0.0;
        if (with_pen) {
          pb.obs.resize(obs_dim, count);
          pb.b.resize(n, count);
          pb.M.reserve(count);
        }
        for (Index c = 0; c < count; ++c) {
          const int k = order[start + c];
          mb_obs.col(c) = obs_buf.col(k);
          mb_u.col(c) = u_buf.col(k);
          mb_adv(c) = adv_n(k);
          mb_ret(c) = ret(k);
          mb_logp(c) = logp_old(k);
          if (with_pen) {
            pb.obs.col(c) = records[static_cast<size_t>(k)].obs;
            pb.b.col(c) = records[static_cast<size_t>(k)].b;
            pb.M.push_back(records[static_cast<size_t>(k)].M);
          }
        }

        PpoBatch mb;
        mb.obs = std::move(mb_obs);
        mb.presquash = std::move(mb_u);
        mb.logp_old = mb_logp;
        mb.advantages = mb_adv;
        mb.returns = mb_ret;
        try {
          ppo_update(policy, value_net, policy_adam, value_adam, mb, cfg.ppo,
                     with_pen ? cfg.lambda_phys : 0.0,
                     with_pen ? &pb : nullptr,
                     coach ? &coach->model : nullptr);
        } catch (const TrainingDiverged& e) {
          result.diverged = true;
          result.divergence_reason = e.what();
          break;
        }
      }
      if (result.diverged) break;
    }
  }
  if (last_eval_step != steps) run_eval(steps);  // final checkpoint

  result.steps_done = steps;
  result.policy_net = policy.net;
  result.obs_mean = obs_norm.mean(obs_dim);
  result.obs_std = obs_norm.stddev(obs_dim);
  if (coach) result.pinn_model = coach->model;
  return result;
}

// --------------------------------- SAC ------------------------------------

TrainResult train_sac(const TrainerConfig& cfg, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const Rng root(seed);
  Rng env_rng = root.split("env");
  Rng expl_rng = root.split("exploration");
  Rng nets_rng = root.split("sac_nets");
  Rng batch_rng = root.split("replay_sample");
  Rng noise_rng = root.split("sac_noise");
  Rng pinn_init_rng = root.split("pinn_init");
  Rng pinn_batch_rng = root.split("pinn_batch");
  Rng metrics_rng = root.split("metrics");

  const sim::EnvSpec& spec = cfg.spec;
  const int obs_dim = sim::observation_dim(spec);
  const int n = spec.chain.n_links();

  SacNets nets = make_sac_nets(obs_dim, n, cfg.policy_hidden,
                               cfg.value_hidden, spec.chain.torque_limit(),
                               cfg.sac.lr, cfg.sac.init_alpha, nets_rng);
  nets.policy.net.b.back().tail(n).array() = cfg.log_std_init;
  ObsNormalizer obs_norm(obs_dim, cfg.normalize_obs);

  std::optional<PinnRuntime> coach;
  if (cfg.piper_enabled) {
    coach.emplace(PinnRuntime{
        pinn::PinnModel::make(obs_dim, n, cfg.pinn.hidden, pinn_init_rng),
        {}, 0.0});
    coach->state.adam = ad::AdamState::make(coach->model.net, cfg.pinn.lr);
    coach->state.beta = cfg.weights.beta;
    coach->state.beta_e = spec.has_object() ? cfg.weights.beta : 0.0;
    coach->state.batch_size = cfg.pinn.batch;
    coach->state.contact_weight = cfg.pinn.contact_weight;
    coach->state.energy_terms = spec.has_object();
  }
  ReplayBuffer replay(cfg.sac.replay_capacity);

  TrainResult result;
  result.tau_max = spec.chain.torque_limit();
  Evaluator evaluator(cfg, root.split("eval"));
  int eval_index = 0;
  long next_eval = 0;
  auto wall = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t0)
        .count();
  };
  long last_eval_step = -1;
  auto run_eval = [&](long step) {
    const BufferMetrics bm =
        buffer_metrics(replay, nets.policy, obs_norm,
                       coach ? &coach->model : nullptr, metrics_rng);
    result.evals.push_back(evaluator.run(nets.policy, obs_norm, step,
                                         eval_index++, wall(), bm.l_phys,
                                         bm.r_energy,
                                         coach ? coach->last_loss : 0.0));
    last_eval_step = step;
    while (next_eval <= step) next_eval += cfg.eval_interval;
  };
  auto maybe_eval = [&](long step) {
    if (step >= next_eval || last_eval_step < 0) run_eval(step);
  };

  auto [world, goal] = sim::reset(spec, env_rng.next_u64());
  int steps_in_episode = 0;
  long steps = 0;
  int divergences = 0;

  while (steps < cfg.total_steps && !result.diverged) {
    maybe_eval(steps);
    const VecX obs_raw = sim::observe(spec, world, goal);
    obs_norm.observe(obs_raw);
    VecX action(n);
    if (steps < cfg.sac.start_steps) {
      for (int i = 0; i < n; ++i)
        action(i) = expl_rng.uniform(-spec.chain.torque_limit()(i),
                                     spec.chain.torque_limit()(i));
    } else {
      action = nets.policy.sample(obs_norm.apply(obs_raw), expl_rng).action;
    }
    StepOutcome oc = collect_step(spec, world, goal, steps_in_episode,
                                  action, cfg.action_repeat);
    if (oc.diverged) {
      ++divergences;
      if (divergences > 50) {
        result.diverged = true;
        result.divergence_reason = "simulation diverged repeatedly";
        break;
      }
      std::tie(world, goal) = sim::reset(spec, env_rng.next_u64());
      steps_in_episode = 0;
      continue;
    }
    result.action_checksum = fnv_accumulate(
        result.action_checksum ^ 0xcbf29ce484222325ULL, oc.record.action);
    replay.push(oc.record);
    if (cfg.piper_enabled) {
      if (!coach->model.norm.frozen()) {
        VecX x(obs_dim + n);
        x << oc.record.obs, oc.record.action;
        coach->model.norm.observe(x);
        coach->model.out_norm.observe(oc.record.qdd_obs);
      }
      if (steps >= cfg.pinn.warmup_steps &&
          steps % cfg.pinn.update_every == 0) {
        const auto rep =
            pinn_update(coach->model, replay, coach->state, pinn_batch_rng);
        if (rep) coach->last_loss = rep->total;
      }
    }
    ++steps;
    if (oc.episode_ended) {
      std::tie(world, goal) = sim::reset(spec, env_rng.next_u64());
      steps_in_episode = 0;
    }

    if (steps >= cfg.sac.start_steps &&
        replay.size() >= static_cast<size_t>(cfg.sac.batch) &&
        steps % cfg.sac.update_every == 0) {
      for (int rep_i = 0; rep_i < cfg.sac.updates_per_cycle; ++rep_i) {
        const auto idx = replay.sample_indices(
            static_cast<size_t>(cfg.sac.batch), batch_rng);
        SacBatch batch;
        batch.obs.resize(obs_dim, cfg.sac.batch);
        batch.actions.resize(n, cfg.sac.batch);
        batch.next_obs.resize(obs_dim, cfg.sac.batch);
        batch.rewards.resize(cfg.sac.batch);
        batch.terminal = VecX::Zero(cfg.sac.batch);
        for (Index c = 0; c < cfg.sac.batch; ++c) {
          const auto& r = replay.at(idx[static_cast<size_t>(c)]);
          batch.obs.col(c) = obs_norm.apply(r.obs);
          batch.actions.col(c) = r.action;
          batch.next_obs.col(c) = obs_norm.apply(r.next_obs);
          batch.rewards(c) = r.reward;
        }
        PenaltyBatch pb;
        const bool with_pen = cfg.piper_enabled && cfg.lambda_phys > 0.0;
        if (with_pen) {
          pb = make_penalty_batch(replay, idx);
          pb.obs_policy = batch.obs;
        }
        try {
          sac_update(nets, batch, cfg.sac, with_pen ? cfg.lambda_phys : 0.0,
                     with_pen ? &pb : nullptr,
                     coach ? &coach->model : nullptr,
                     cfg.penalty_use_mean_action, noise_rng);
        } catch (const TrainingDiverged& e) {
          result.diverged = true;
          result.divergence_reason = e.what();
          break;
        }
      }
    }
  }
  if (last_eval_step != steps) run_eval(steps);

  result.steps_done = steps;
  result.policy_net = nets.policy.net;
  result.obs_mean = obs_norm.mean(obs_dim);
  result.obs_std = obs_norm.stddev(obs_dim);
  if (coach) result.pinn_model = coach->model;
  return result;
}

}  // namespace

TrainResult train_run(const TrainerConfig& cfg, std::uint64_t seed) {
  cfg.weights.validate();
  require(cfg.total_steps > 0 && cfg.eval_interval > 0 &&
              cfg.eval_episodes > 0,
          "train_run: counts must be positive");
  if (cfg.algorithm == "ppo") return train_ppo(cfg, seed);
  if (cfg.algorithm == "sac") return train_sac(cfg, seed);
  throw ContractViolation("train_run: unknown algorithm \"" + cfg.algorithm +
                          "\"");
}

}  // namespace piper::rl
