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

#include <cmath>

#include "piper/dynamics.hpp"
#include "piper/oracle.hpp"
#include "piper/pinn.hpp"
#include "piper/rng.hpp"
#include "piper/sim.hpp"
#include "support/test_models.hpp"

using namespace piper;
using namespace piper::pinn;

namespace {

/// Collects transitions from a uniform-random policy on reach2d.
rl::ReplayBuffer collect_reach_data(int steps, std::uint64_t seed) {
  const sim::EnvSpec spec = sim::EnvSpec::defaults(sim::EnvId::reach2d, 2);
  rl::ReplayBuffer buffer(static_cast<size_t>(steps));
  Rng rng = Rng(seed).split("collect");
  auto [world, goal] = sim::reset(spec, rng.next_u64());
  int in_episode = 0;
  for (int k = 0; k < steps; ++k) {
    VecX tau(2);
    for (int i = 0; i < 2; ++i)
      tau(i) = rng.uniform(-spec.chain.torque_limit()(i),
                           spec.chain.torque_limit()(i));
    const sim::WorldState before = world;
    const VecX obs = sim::observe(spec, world, goal);
    auto [next, rec] = sim::step(spec, world, tau);
    const auto s = oracle::sample_transition(spec, before, rec, next.arm.qd);
    rl::TransitionRecord r;
    r.obs = obs;
    r.action = tau;
    r.qdd_obs = s.qdd_obs;
    r.M = s.M;
    r.b = s.b;
    r.contact_flagged = s.contact_flagged;
    r.qd = before.arm.qd;
    r.gravity = gravity_vector(spec.chain, before.arm.q);
    r.m_rate = mass_matrix_rate(s.M, mass_matrix(spec.chain, next.arm.q),
                                spec.dt);
    buffer.push(std::move(r));
    world = next;
    if (++in_episode >= spec.horizon) {
      std::tie(world, goal) = sim::reset(spec, rng.next_u64());
      in_episode = 0;
    }
  }
  return buffer;
}

PinnBatch whole_buffer_batch(const rl::ReplayBuffer& buffer, bool energy) {
  std::vector<size_t> idx(buffer.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_pinn_batch(buffer, idx, energy, 0.5);
}

}  // namespace

TEST_CASE("pinn: prediction is deterministic and finite") {
  Rng rng(1);
  PinnModel pm = PinnModel::make(8, 2, {32, 32}, rng);
  const VecX obs = piper::testing::random_vec(rng, 8, -2, 2);
  const VecX act = piper::testing::random_vec(rng, 2, -5, 5);
  const VecX a = pm.predict_accel(obs, act);
  const VecX b = pm.predict_accel(obs, act);
  CHECK(a.allFinite());
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.size() == 2);
}

TEST_CASE("pinn: reference configuration hits the parameter budget") {
  Rng rng(2);
  // Reference task: reach2d with a 2-link arm (8-dim observation).
  PinnModel pm = PinnModel::make(8, 2, PinnModel::reference_hidden(), rng);
  const long count = pm.net.param_count();
  CHECK(count >= 162000 * 0.9);
  CHECK(count <= 162000 * 1.1);
}

TEST_CASE("pinn loss: beta = 0 reduces to the plain weighted MSE") {
  Rng rng(3);
  PinnModel pm = PinnModel::make(8, 2, {16, 16}, rng);
  auto buffer = collect_reach_data(256, 7);
  PinnBatch batch = whole_buffer_batch(buffer, false);

  const auto report = pinn_loss(pm, batch, 0.0, 0.0, nullptr);
  CHECK(report.residual == 0.0);
  CHECK(report.energy == 0.0);

  // Independent MSE computation.
  double mse = 0.0;
  for (Index j = 0; j < batch.size(); ++j) {
    const VecX pred = pm.predict_accel(batch.obs.col(j), batch.actions.col(j));
    mse += batch.weight(j) * (pred - VecX(batch.qdd_obs.col(j))).squaredNorm();
  }
  mse /= static_cast<double>(batch.size());
  CHECK(std::abs(report.total - mse) <= 1e-12 * std::max(1.0, mse));
}

TEST_CASE("pinn loss: zero when the network output equals the labels") {
  Rng rng(4);
  PinnModel pm = PinnModel::make(4, 2, {8}, rng);
  // Labels manufactured from the model's own predictions.
  const int B = 10;
  PinnBatch batch;
  batch.obs = ad::Mat::Random(4, B);
  batch.actions = ad::Mat::Random(2, B);
  batch.qdd_obs.resize(2, B);
  for (int j = 0; j < B; ++j)
    batch.qdd_obs.col(j) =
        pm.predict_accel(batch.obs.col(j), batch.actions.col(j));
  batch.b = ad::Mat::Zero(2, B);
  for (int j = 0; j < B; ++j) batch.M.push_back(MatX::Identity(2, 2));
  batch.weight = Eigen::RowVectorXd::Ones(B);
  const auto report = pinn_loss(pm, batch, 0.0, 0.0, nullptr);
  CHECK(report.total <= 1e-24);
}

TEST_CASE("pinn loss: residual term delegates to the physics formula") {
  Rng rng(5);
  PinnModel pm = PinnModel::make(8, 2, {16, 16}, rng);
  auto buffer = collect_reach_data(128, 11);
  PinnBatch batch = whole_buffer_batch(buffer, false);
  const double beta = 0.37;
  const auto report = pinn_loss(pm, batch, beta, 0.0, nullptr);
  double expect = 0.0;
  for (Index j = 0; j < batch.size(); ++j) {
    const VecX pred = pm.predict_accel(batch.obs.col(j), batch.actions.col(j));
    const VecX r = batch.M[static_cast<size_t>(j)] * pred +
                   VecX(batch.b.col(j)) - VecX(batch.actions.col(j));
    expect += r.squaredNorm();
  }
  expect *= beta / static_cast<double>(batch.size());
  CHECK(report.residual ==
        doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("pinn loss: gradient matches finite differences through the M path") {
  Rng rng(6);
  PinnModel pm = PinnModel::make(8, 2, {12, 12}, rng);
  auto buffer = collect_reach_data(64, 13);
  PinnBatch batch = whole_buffer_batch(buffer, true);

  auto loss = [&](const ad::Network& n, ad::Gradients* sink) {
    PinnModel probe{n, pm.norm, pm.out_norm};
    return pinn_loss(probe, batch, 0.2, 0.1, sink).total;
  };
  Rng dir_rng(7);
  CHECK(ad::grad_check(pm.net, loss, dir_rng, 60, 1e-5) <= 1e-4);
}

TEST_CASE("pinn training: loss drops 10x on a fixed dataset across seeds") {
  auto buffer = collect_reach_data(3000, 17);
  double ratio_sum = 0.0;
  for (std::uint64_t seed : {42, 43, 44, 45, 46}) {
    Rng rng(seed);
    Rng init_rng = rng.split("pinn_init");
    Rng batch_rng = rng.split("pinn_batch");
    PinnModel pm = PinnModel::make(8, 2, {32, 32}, init_rng);
    // Freeze normalization on the dataset statistics.
    for (size_t i = 0; i < buffer.size(); ++i) {
      VecX x(10);
      x << buffer.at(i).obs, buffer.at(i).action;
      pm.norm.observe(x);
      pm.out_norm.observe(buffer.at(i).qdd_obs);
    }
    PinnTrainState state;
    state.adam = ad::AdamState::make(pm.net, 1e-3);
    state.beta = 0.1;
    state.beta_e = 0.0;
    state.batch_size = 32;

    const PinnBatch eval_batch = whole_buffer_batch(buffer, false);
    const double loss0 = pinn_loss(pm, eval_batch, 0.1, 0.0, nullptr).total;
    for (int k = 0; k < 5000; ++k)
      pinn_update(pm, buffer, state, batch_rng);
    const double loss1 = pinn_loss(pm, eval_batch, 0.1, 0.0, nullptr).total;
    ratio_sum += loss1 / loss0;
  }
  CHECK(ratio_sum / 5.0 <= 0.1);
}

TEST_CASE("pinn update: empty buffer is a documented no-op") {
  Rng rng(8);
  PinnModel pm = PinnModel::make(4, 1, {8}, rng);
  PinnTrainState state;
  state.adam = ad::AdamState::make(pm.net, 1e-3);
  rl::ReplayBuffer empty(16);
  const VecX before = ad::flatten_params(pm.net);
  CHECK_FALSE(pinn_update(pm, empty, state, rng).has_value());
  CHECK((ad::flatten_params(pm.net) - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("normalizer: welford statistics and freeze semantics") {
  Normalizer norm(2);
  Rng rng(9);
  std::vector<VecX> xs;
  for (int i = 0; i < 500; ++i) {
    VecX x(2);
    x << rng.uniform(2.0, 4.0), rng.uniform(-10.0, 10.0);
    xs.push_back(x);
    norm.observe(x);
  }
  VecX mean = VecX::Zero(2), var = VecX::Zero(2);
  for (const auto& x : xs) mean += x;
  mean /= xs.size();
  for (const auto& x : xs) var += (x - mean).cwiseAbs2();
  var /= xs.size();
  CHECK((norm.mean() - mean).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((norm.stddev() - var.cwiseSqrt()).cwiseAbs().maxCoeff() <= 1e-10);

  norm.freeze();
  CHECK_THROWS_AS(norm.observe(xs[0]), ContractViolation);

  // Normalized statistics are standard.
  VecX nm = VecX::Zero(2), nv = VecX::Zero(2);
  for (const auto& x : xs) nm += norm.apply(x);
  nm /= xs.size();
  for (const auto& x : xs) nv += (norm.apply(x) - nm).cwiseAbs2();
  nv /= xs.size();
  CHECK(nm.cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((nv - VecX::Ones(2)).cwiseAbs().maxCoeff() <= 1e-8);
}
