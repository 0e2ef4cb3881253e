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
#include "piper/rng.hpp"
#include "piper/sim.hpp"
#include "support/test_models.hpp"

using namespace piper;
using namespace piper::sim;
using piper::testing::unit_pendulum;

namespace {

/// Max relative energy deviation of a torque-free pendulum over `duration`
/// seconds at the given step.
double pendulum_energy_drift(double dt, double duration) {
  EnvSpec spec = EnvSpec::defaults(EnvId::reach2d, 1);
  spec.chain = unit_pendulum();
  spec.dt = dt;
  WorldState world;
  world.arm.q = VecX::Constant(1, -M_PI / 2.0 + 1.0);
  world.arm.qd = VecX::Zero(1);
  const double e0 = total_energy(spec.chain, world.arm.q, world.arm.qd);
  const VecX tau = VecX::Zero(1);
  double worst = 0.0;
  const int steps = static_cast<int>(duration / dt);
  for (int k = 0; k < steps; ++k) {
    world = step(spec, world, tau).first;
    const double e = total_energy(spec.chain, world.arm.q, world.arm.qd);
    worst = std::max(worst, std::abs(e - e0) / std::abs(e0));
  }
  return worst;
}

}  // namespace

TEST_CASE("energy: pendulum drift bounded and first order in dt") {
  const double drift_dt = pendulum_energy_drift(0.002, 5.0);
  CHECK(drift_dt <= 0.01);
  const double drift_half = pendulum_energy_drift(0.001, 5.0);
  const double ratio = drift_dt / drift_half;
  CHECK(ratio >= 1.6);
  CHECK(ratio <= 2.4);
}

TEST_CASE("friction: free puck stopping distance matches Coulomb closed form") {
  EnvSpec spec = EnvSpec::defaults(EnvId::push2d, 2);
  WorldState world;
  world.arm.q = VecX::Constant(2, 0.3);
  world.arm.qd = VecX::Zero(2);
  world.object_pos = Vec2(5.0, 0.0);  // far outside the arm's reach
  const double v0 = 1.2;
  world.object_vel = Vec2(v0, 0.0);

  const Vec2 start = *world.object_pos;
  const VecX tau = VecX::Zero(2);
  double w_fric = 0.0;
  for (int k = 0; k < 4000 && world.object_vel->norm() > 0.0; ++k) {
    auto [next, rec] = step(spec, world, tau);
    w_fric += rec.friction_work_increment;
    world = next;
  }
  CHECK(world.object_vel->norm() == 0.0);
  const double distance = (*world.object_pos - start).norm();
  const double expected = v0 * v0 / (2.0 * spec.friction_mu * spec.g_normal);
  CHECK(std::abs(distance - expected) / expected <= 0.02);
  // Friction work balances the initial kinetic energy exactly.
  CHECK(w_fric ==
        doctest::Approx(0.5 * spec.object_mass * v0 * v0).epsilon(1e-9));
}

TEST_CASE("equilibrium: zero torque at rest changes only the clock") {
  EnvSpec spec = EnvSpec::defaults(EnvId::push2d, 3);
  WorldState world;
  world.arm.q = VecX::Constant(3, 0.4);
  world.arm.qd = VecX::Zero(3);
  world.object_pos = Vec2(3.0, 3.0);
  world.object_vel = Vec2::Zero();
  const auto [next, rec] = step(spec, world, VecX::Zero(3));
  CHECK((next.arm.q - world.arm.q).cwiseAbs().maxCoeff() == 0.0);
  CHECK(next.arm.qd.cwiseAbs().maxCoeff() == 0.0);
  CHECK((*next.object_pos - *world.object_pos).norm() == 0.0);
  CHECK(next.time == doctest::Approx(spec.dt));
  CHECK(rec.normal_force == 0.0);
}

TEST_CASE("determinism: same seed and action sequence, identical trajectory") {
  const EnvSpec spec = EnvSpec::defaults(EnvId::push2d, 2);
  Rng torque_rng(99);
  std::vector<VecX> taus;
  for (int k = 0; k < 200; ++k)
    taus.push_back(piper::testing::random_vec(torque_rng, 2, -8.0, 8.0));

  auto run = [&]() {
    auto [world, goal] = reset(spec, 4242);
    for (const auto& tau : taus) world = step(spec, world, tau).first;
    return std::make_pair(world, goal);
  };
  const auto [w1, g1] = run();
  const auto [w2, g2] = run();
  CHECK((g1 - g2).norm() == 0.0);
  CHECK((w1.arm.q - w2.arm.q).cwiseAbs().maxCoeff() == 0.0);
  CHECK((w1.arm.qd - w2.arm.qd).cwiseAbs().maxCoeff() == 0.0);
  CHECK((*w1.object_pos - *w2.object_pos).norm() == 0.0);
}

TEST_CASE("reset: goals respect per-environment reachability") {
  const EnvSpec reach = EnvSpec::defaults(EnvId::reach2d, 2);
  const EnvSpec slide = EnvSpec::defaults(EnvId::slide2d, 2);
  const EnvSpec push = EnvSpec::defaults(EnvId::push2d, 2);
  const double arm_reach = reach.chain.total_length();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto [wr, gr] = reset(reach, seed);
    CHECK(gr.norm() <= 0.9 * arm_reach + 1e-12);
    CHECK(gr.norm() >= 0.25 * arm_reach - 1e-12);
    CHECK((gr.array() >= reach.goal_box_lo.array()).all());
    CHECK((gr.array() <= reach.goal_box_hi.array()).all());
    CHECK_FALSE(wr.object_pos.has_value());

    const auto [ws, gs] = reset(slide, seed);
    CHECK(gs.norm() > slide.chain.total_length());
    CHECK(ws.object_pos->norm() < slide.chain.total_length());

    // Push resets put the end effector within striking distance of the block.
    const auto [wp, gp] = reset(push, seed);
    const Vec2 ee = forward_kinematics(push.chain, wp.arm.q);
    CHECK((ee - *wp.object_pos).norm() <= push.object_radius + 0.06);
    CHECK(gp.norm() <= 0.85 * arm_reach + 1e-12);
  }
}

TEST_CASE("observe: layout and definitional entries") {
  const EnvSpec reach = EnvSpec::defaults(EnvId::reach2d, 2);
  CHECK(observation_dim(reach) == 8);
  const EnvSpec push = EnvSpec::defaults(EnvId::push2d, 2);
  CHECK(observation_dim(push) == 14);

  const auto [world, goal] = reset(reach, 7);
  const VecX obs = observe(reach, world, goal);
  CHECK(obs.size() == 8);
  // Joint angles are reported wrapped to (-pi, pi].
  for (int i = 0; i < 2; ++i) {
    const double w = std::remainder(world.arm.q(i), 2.0 * M_PI);
    CHECK(obs(i) == doctest::Approx(w == -M_PI ? M_PI : w));
  }
  const Vec2 ee = forward_kinematics(reach.chain, world.arm.q);
  CHECK((Vec2(obs.segment(4, 2)) - ee).norm() == 0.0);
  CHECK((Vec2(obs.segment(6, 2)) - goal).norm() == 0.0);
  // Pure function of (world, goal).
  CHECK((observe(reach, world, goal) - obs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reward and success: sparse, dense, and the closed-ball boundary") {
  EnvSpec spec = EnvSpec::defaults(EnvId::reach2d, 2);
  WorldState world;
  world.arm.q = VecX::Zero(2);
  world.arm.qd = VecX::Zero(2);
  const Vec2 ee = forward_kinematics(spec.chain, world.arm.q);

  spec.reward_mode = RewardMode::dense;
  const Vec2 goal_quarter = ee + Vec2(0.25, 0.0);
  CHECK(reward(spec, world, goal_quarter) == doctest::Approx(-0.25));
  CHECK(reward(spec, world, ee) == doctest::Approx(0.0));

  spec.reward_mode = RewardMode::sparse;
  CHECK(reward(spec, world, goal_quarter) == -1.0);
  CHECK(reward(spec, world, ee) == 0.0);

  // Boundary point at exactly success_radius counts as success. A dyadic
  // radius keeps the distance computation exact.
  spec.success_radius = 0.0625;
  const Vec2 goal_boundary = ee + Vec2(spec.success_radius, 0.0);
  CHECK(success(spec, world, goal_boundary));
  CHECK(final_error(spec, world, goal_boundary) ==
        doctest::Approx(spec.success_radius));
  const Vec2 goal_outside = ee + Vec2(spec.success_radius + 1e-9, 0.0);
  CHECK_FALSE(success(spec, world, goal_outside));
}

TEST_CASE("dense reward is monotone in distance") {
  EnvSpec spec = EnvSpec::defaults(EnvId::reach2d, 2);
  WorldState world;
  world.arm.q = VecX::Zero(2);
  world.arm.qd = VecX::Zero(2);
  const Vec2 ee = forward_kinematics(spec.chain, world.arm.q);
  double prev = reward(spec, world, ee + Vec2(0.01, 0));
  for (double d = 0.05; d < 1.0; d += 0.05) {
    const double r = reward(spec, world, ee + Vec2(d, 0));
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("contact: tau_ext maps the reaction force through the jacobian") {
  const EnvSpec spec = EnvSpec::defaults(EnvId::push2d, 2);
  auto [world, goal] = reset(spec, 11);
  // Drive the arm toward the object until contact occurs.
  const Vec2 dir = (*world.object_pos -
                    forward_kinematics(spec.chain, world.arm.q))
                       .normalized();
  bool touched = false;
  for (int k = 0; k < 500 && !touched; ++k) {
    const VecX tau =
        ee_jacobian(spec.chain, world.arm.q).transpose() * (2.0 * dir);
    const Vec2 ee_pre = forward_kinematics(spec.chain, world.arm.q);
    const Vec2 delta = *world.object_pos - ee_pre;
    const MatX J_pre = ee_jacobian(spec.chain, world.arm.q);
    auto [next, rec] = step(spec, world, tau);
    if (rec.normal_force > 0.0) {
      touched = true;
      const Vec2 normal = delta.normalized();
      const VecX expected =
          J_pre.transpose() * (-rec.normal_force * normal);
      CHECK((rec.tau_ext - expected).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK(rec.normal_force >= 0.0);
      CHECK(rec.friction_work_increment >= 0.0);
    }
    world = next;
  }
  CHECK(touched);
}

TEST_CASE("impulse bookkeeping: strike event matches momentum change") {
  const EnvSpec spec = EnvSpec::defaults(EnvId::slide2d, 2);
  auto [world, goal] = reset(spec, 3);
  // Launch the end effector through the puck at roughly 3 m/s.
  const Vec2 dir = (*world.object_pos -
                    forward_kinematics(spec.chain, world.arm.q))
                       .normalized();
  const MatX J = ee_jacobian(spec.chain, world.arm.q);
  world.arm.qd = J.transpose() *
                 (J * J.transpose()).ldlt().solve(Vec2(3.0 * dir));

  const Vec2 v_before = *world.object_vel;
  bool event_seen = false;
  Vec2 impulse = Vec2::Zero();
  Vec2 v_after = v_before;
  const VecX tau = VecX::Zero(2);
  for (int k = 0; k < 400; ++k) {
    auto [next, rec] = step(spec, world, tau);
    world = next;
    if (rec.event_active) {
      event_seen = true;
      impulse = rec.ee_object_impulse;
      v_after = *world.object_vel;
    } else if (event_seen) {
      break;  // event closed
    }
  }
  REQUIRE(event_seen);
  const Vec2 dv = v_after - v_before;
  const double err =
      (spec.object_mass * dv - impulse).norm() / impulse.norm();
  CHECK(err <= 0.02);
  CHECK(impulse.norm() > 0.05);  // a real strike, not a graze
}

TEST_CASE("contact creates no energy beyond work input and spring storage") {
  const EnvSpec spec = EnvSpec::defaults(EnvId::push2d, 2);
  auto [world, goal] = reset(spec, 21);
  Rng rng(77);
  const double e0 = mechanical_energy(spec, world);
  const double s0 = contact_spring_energy(spec, world);
  double work_in = 0.0, w_fric = 0.0, abs_work = 0.0;
  double worst_created = 0.0;
  for (int k = 0; k < 500; ++k) {
    const VecX tau = piper::testing::random_vec(rng, 2, -6.0, 6.0);
    auto [next, rec] = step(spec, world, tau);
    // Work measured at the post-update velocity, matching the position rule.
    const double dw = spec.dt * tau.dot(next.arm.qd);
    work_in += dw;
    abs_work += std::abs(dw);
    w_fric += rec.friction_work_increment;
    CHECK(rec.friction_work_increment >= 0.0);
    world = next;
    const double created = mechanical_energy(spec, world) + w_fric +
                           contact_spring_energy(spec, world) - s0 - e0 -
                           work_in;
    worst_created = std::max(worst_created, created);
  }
  CHECK(worst_created <= 0.02 * (1.0 + abs_work));
}

TEST_CASE("divergence: absurd stiffness raises SimulationDiverged") {
  EnvSpec spec = EnvSpec::defaults(EnvId::push2d, 2);
  spec.contact_stiffness = 1e12;
  auto [world, goal] = reset(spec, 5);
  const Vec2 dir = (*world.object_pos -
                    forward_kinematics(spec.chain, world.arm.q))
                       .normalized();
  bool diverged = false;
  for (int k = 0; k < 2000 && !diverged; ++k) {
    const VecX tau =
        ee_jacobian(spec.chain, world.arm.q).transpose() * (4.0 * dir);
    try {
      world = step(spec, world, tau).first;
    } catch (const SimulationDiverged&) {
      diverged = true;
    }
  }
  CHECK(diverged);
}

TEST_CASE("step: contract checks on dimensions and object presence") {
  const EnvSpec spec = EnvSpec::defaults(EnvId::reach2d, 2);
  auto [world, goal] = reset(spec, 1);
  CHECK_THROWS_AS(step(spec, world, VecX::Zero(3)), ContractViolation);
  WorldState with_obj = world;
  with_obj.object_pos = Vec2(1, 1);
  with_obj.object_vel = Vec2::Zero();
  CHECK_THROWS_AS(step(spec, with_obj, VecX::Zero(2)), ContractViolation);
}

TEST_CASE("torque clipping: actions beyond the limit behave like the limit") {
  const EnvSpec spec = EnvSpec::defaults(EnvId::reach2d, 2);
  auto [world, goal] = reset(spec, 9);
  VecX huge(2), at_limit(2);
  huge << 1e6, -1e6;
  at_limit << spec.chain.torque_limit()(0), -spec.chain.torque_limit()(1);
  const auto a = step(spec, world, huge).first;
  const auto b = step(spec, world, at_limit).first;
  CHECK((a.arm.q - b.arm.q).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.arm.qd - b.arm.qd).cwiseAbs().maxCoeff() == 0.0);
}
