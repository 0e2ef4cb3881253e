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

#include "piper/sim.hpp"

#include <cmath>

#include "piper/dynamics.hpp"
#include "piper/rng.hpp"

namespace piper::sim {

std::string to_string(EnvId id) {
  switch (id) {
    case EnvId::reach2d: return "reach2d";
    case EnvId::push2d: return "push2d";
    case EnvId::slide2d: return "slide2d";
  }
  return "?";
}

EnvId env_id_from_string(const std::string& s) {
  if (s == "reach2d") return EnvId::reach2d;
  if (s == "push2d") return EnvId::push2d;
  if (s == "slide2d") return EnvId::slide2d;
  throw ContractViolation("env_id: expected reach2d|push2d|slide2d, got \"" +
                          s + "\"");
}

namespace {

ChainModel default_chain(EnvId id, int n_links) {
  const bool vertical = (id == EnvId::reach2d);
  std::vector<LinkParams> links(static_cast<size_t>(n_links));
  VecX tau_max(n_links);
  for (int i = 0; i < n_links; ++i) {
    auto& p = links[static_cast<size_t>(i)];
    p.length = 0.5;
    p.mass = 0.8 * std::pow(0.75, i);
    p.com_offset = 0.25;
    p.inertia_com = p.mass * p.length * p.length / 12.0;
    tau_max(i) = (vertical ? 14.0 : 8.0) / (1.0 + i);
  }
  const Vec2 g = vertical ? Vec2(0.0, -9.81) : Vec2(0.0, 0.0);
  return ChainModel::make(std::move(links), g, std::move(tau_max));
}

/// Damped-least-squares inverse kinematics; deterministic fixed iteration.
VecX ik_solve(const ChainModel& chain, const Vec2& target, VecX q) {
  for (int iter = 0; iter < 200; ++iter) {
    const Vec2 err = target - forward_kinematics(chain, q);
    if (err.norm() < 1e-10) break;
    const MatX J = ee_jacobian(chain, q);
    const Eigen::Matrix2d JJt =
        (J * J.transpose() + 1e-4 * Eigen::Matrix2d::Identity());
    q += J.transpose() * JJt.ldlt().solve(Vec2(err));
  }
  return q;
}

Vec2 clamp_to_box(const Vec2& v, const Vec2& lo, const Vec2& hi) {
  return Vec2(std::min(std::max(v.x(), lo.x()), hi.x()),
              std::min(std::max(v.y(), lo.y()), hi.y()));
}

}  // namespace

EnvSpec EnvSpec::defaults(EnvId id, int n_links) {
  EnvSpec spec{.env_id = id, .chain = default_chain(id, n_links)};
  const double reach = spec.chain.total_length();
  switch (id) {
    case EnvId::reach2d:
      spec.horizon = 400;
      spec.goal_box_lo = Vec2(-0.9 * reach, -0.9 * reach);
      spec.goal_box_hi = Vec2(0.9 * reach, 0.9 * reach);
      break;
    case EnvId::push2d:
      spec.horizon = 500;
      spec.goal_box_lo = Vec2(-0.85 * reach, -0.85 * reach);
      spec.goal_box_hi = Vec2(0.85 * reach, 0.85 * reach);
      break;
    case EnvId::slide2d:
      spec.horizon = 400;
      spec.goal_box_lo = Vec2(-1.6 * reach, -1.6 * reach);
      spec.goal_box_hi = Vec2(1.6 * reach, 1.6 * reach);
      break;
  }
  return spec;
}

std::pair<WorldState, Vec2> reset(const EnvSpec& spec, std::uint64_t seed) {
  const int n = spec.chain.n_links();
  const double reach = spec.chain.total_length();
  Rng rng = Rng(seed).split("env_reset");

  WorldState world;
  world.arm.q = VecX::Zero(n);
  world.arm.qd = VecX::Zero(n);
  world.time = 0.0;

  Vec2 goal = Vec2::Zero();
  switch (spec.env_id) {
    case EnvId::reach2d: {
      // Broad initial-state distribution: each joint uniform over
      // +/- reset_joint_range at rest. The goal is sampled around the
      // starting end-effector position (offset goal_offset_min..max) and
      // clipped to the reachable annulus; distances stay desk-scale so
      // approach and stabilization are learnable within the step budget.
      for (int i = 0; i < n; ++i)
        world.arm.q(i) =
            rng.uniform(-spec.reset_joint_range, spec.reset_joint_range);
      const Vec2 ee = forward_kinematics(spec.chain, world.arm.q);
      const double ang = rng.uniform(-M_PI, M_PI);
      const double off =
          rng.uniform(spec.goal_offset_min, spec.goal_offset_max);
      goal = ee + off * Vec2(std::cos(ang), std::sin(ang));
      const double radius = goal.norm();
      const double lo = 0.25 * reach, hi = 0.9 * reach;
      if (radius > hi) goal *= hi / radius;
      if (radius < lo && radius > 1e-9) goal *= lo / radius;
      break;
    }
    case EnvId::push2d: {
      const double ang_o = rng.uniform(-M_PI, M_PI);
      const Vec2 obj = 0.45 * reach * Vec2(std::cos(ang_o), std::sin(ang_o));
      // Push direction biased outward so the goal stays reachable.
      const double ang_g = ang_o + rng.uniform(-0.5, 0.5);
      const double dist_g = reach * rng.uniform(0.15, 0.3);
      goal = obj + dist_g * Vec2(std::cos(ang_g), std::sin(ang_g));
      if (goal.norm() > 0.8 * reach) goal *= 0.8 * reach / goal.norm();
      world.object_pos = obj;
      world.object_vel = Vec2::Zero();
      // End effector starts just behind the block, opposite the goal.
      const Vec2 dir = (goal - obj).normalized();
      const Vec2 ee_start = obj - (spec.object_radius + 0.03) * dir;
      VecX q0 = VecX::Constant(n, 0.3);
      q0(0) = ang_o;
      world.arm.q = ik_solve(spec.chain, ee_start, q0);
      break;
    }
    case EnvId::slide2d: {
      const double ang_o = rng.uniform(-M_PI, M_PI);
      const Vec2 obj = 0.5 * reach * Vec2(std::cos(ang_o), std::sin(ang_o));
      const double ang_g = ang_o + rng.uniform(-0.35, 0.35);
      const double rad_g = reach * rng.uniform(1.15, 1.5);
      goal = Vec2(rad_g * std::cos(ang_g), rad_g * std::sin(ang_g));
      world.object_pos = obj;
      world.object_vel = Vec2::Zero();
      const Vec2 dir = (goal - obj).normalized();
      const Vec2 ee_start = obj - (spec.object_radius + 0.08) * dir;
      VecX q0 = VecX::Constant(n, 0.3);
      q0(0) = ang_o;
      world.arm.q = ik_solve(spec.chain, ee_start, q0);
      break;
    }
  }
  goal = clamp_to_box(goal, spec.goal_box_lo, spec.goal_box_hi);
  return {world, goal};
}

std::pair<WorldState, ContactRecord> step(const EnvSpec& spec,
                                          const WorldState& world,
                                          const VecX& tau) {
  const int n = spec.chain.n_links();
  require(tau.size() == n, "step: tau has wrong dimension");
  require(world.arm.q.size() == n && world.arm.qd.size() == n,
          "step: world state has wrong dimension");
  require(spec.has_object() == world.object_pos.has_value(),
          "step: object presence does not match environment");

  const VecX tau_c =
      tau.cwiseMin(spec.chain.torque_limit()).cwiseMax(-spec.chain.torque_limit());

  const VecX& q = world.arm.q;
  const VecX& qd = world.arm.qd;
  const Vec2 ee = forward_kinematics(spec.chain, q);
  const MatX J = ee_jacobian(spec.chain, q);

  ContactRecord rec;
  rec.tau_ext = VecX::Zero(n);
  rec.contact_point = ee;

  // Penalty contact between the end-effector point and the object disk,
  // evaluated on the pre-step state.
  Vec2 force_on_object = Vec2::Zero();
  MaybeExternalForce f_ext;
  if (spec.has_object()) {
    const Vec2 delta = *world.object_pos - ee;
    const double dist = delta.norm();
    if (dist < spec.object_radius) {
      const Vec2 normal = dist > 1e-9 ? Vec2(delta / dist) : Vec2(1.0, 0.0);
      const double penetration = spec.object_radius - dist;
      const Vec2 v_ee = J * qd;
      const double separation_rate = (*world.object_vel - v_ee).dot(normal);
      const double fn = spec.contact_stiffness * penetration -
                        spec.contact_damping * separation_rate;
      if (fn > 0.0) {
        force_on_object = fn * normal;
        f_ext = ExternalForce{-force_on_object};
        rec.normal_force = fn;
        rec.tau_ext = J.transpose() * (-force_on_object);
      }
    }
  }

  // Arm: semi-implicit Euler, velocity before position.
  const VecX qdd = forward_dynamics(spec.chain, q, qd, tau_c, f_ext);
  WorldState next = world;
  next.arm.qd = qd + spec.dt * qdd;
  next.arm.q = q + spec.dt * next.arm.qd;
  next.time = world.time + spec.dt;

  // Object: applied contact force, then an exact Coulomb friction impulse.
  // Velocities at or below one step's friction impulse come to rest (static
  // hold); the work increment is the kinetic energy the impulse removes.
  if (spec.has_object()) {
    const double m = spec.object_mass;
    Vec2 v_trial = *world.object_vel + (spec.dt / m) * force_on_object;
    const double dv_fric = spec.friction_mu * spec.g_normal * spec.dt;
    const double speed = v_trial.norm();
    Vec2 v_new;
    if (speed <= dv_fric) {
      v_new = Vec2::Zero();
      rec.friction_work_increment = 0.5 * m * speed * speed;
    } else {
      v_new = v_trial * (1.0 - dv_fric / speed);
      rec.friction_work_increment =
          spec.friction_mu * m * spec.g_normal * spec.dt *
          0.5 * (speed + v_new.norm());
    }
    next.object_vel = v_new;
    next.object_pos = *world.object_pos + spec.dt * v_new;
  }

  // Impulse bookkeeping over the contiguous contact event.
  const bool was_active =
      world.last_contact.has_value() && world.last_contact->event_active;
  if (rec.normal_force > 0.0) {
    rec.ee_object_impulse =
        (was_active ? world.last_contact->ee_object_impulse : Vec2::Zero()) +
        spec.dt * force_on_object;
    rec.event_active = true;
  } else if (was_active) {
    // Event just closed; retain the completed total.
    rec.ee_object_impulse = world.last_contact->ee_object_impulse;
    rec.event_active = false;
  }
  next.last_contact = rec;

  const bool finite =
      next.arm.q.allFinite() && next.arm.qd.allFinite() &&
      (!spec.has_object() ||
       (next.object_pos->allFinite() && next.object_vel->allFinite()));
  if (!finite)
    throw SimulationDiverged("step: non-finite state at t=" +
                             std::to_string(next.time));
  return {next, rec};
}

int observation_dim(const EnvSpec& spec) {
  const int n = spec.chain.n_links();
  return spec.has_object() ? 2 * n + 10 : 2 * n + 4;
}

namespace {

double wrap_angle(double q) {
  // (-pi, pi]; keeps revolute states unique in the observation.
  const double two_pi = 2.0 * M_PI;
  double w = std::fmod(q + M_PI, two_pi);
  if (w <= 0.0) w += two_pi;
  return w - M_PI;
}

}  // namespace

VecX observe(const EnvSpec& spec, const WorldState& world, const Vec2& goal) {
  const int n = spec.chain.n_links();
  const Vec2 ee = forward_kinematics(spec.chain, world.arm.q);
  VecX obs(observation_dim(spec));
  obs.head(n) = world.arm.q.unaryExpr([](double q) { return wrap_angle(q); });
  obs.segment(n, n) = world.arm.qd;
  obs.segment(2 * n, 2) = ee;
  obs.segment(2 * n + 2, 2) = goal;
  if (spec.has_object()) {
    obs.segment(2 * n + 4, 2) = *world.object_pos;
    obs.segment(2 * n + 6, 2) = *world.object_vel;
    obs.segment(2 * n + 8, 2) = ee - *world.object_pos;
  }
  return obs;
}

double final_error(const EnvSpec& spec, const WorldState& world,
                   const Vec2& goal) {
  const Vec2 p = spec.has_object()
                     ? *world.object_pos
                     : forward_kinematics(spec.chain, world.arm.q);
  return (p - goal).norm();
}

bool success(const EnvSpec& spec, const WorldState& world, const Vec2& goal) {
  return final_error(spec, world, goal) <= spec.success_radius;
}

double reward(const EnvSpec& spec, const WorldState& world, const Vec2& goal) {
  const double err = final_error(spec, world, goal);
  if (spec.reward_mode == RewardMode::sparse)
    return err > spec.success_radius ? -1.0 : 0.0;
  return -err;
}

double contact_spring_energy(const EnvSpec& spec, const WorldState& world) {
  if (!spec.has_object()) return 0.0;
  const Vec2 ee = forward_kinematics(spec.chain, world.arm.q);
  const double dist = (*world.object_pos - ee).norm();
  const double penetration = spec.object_radius - dist;
  if (penetration <= 0.0) return 0.0;
  return 0.5 * spec.contact_stiffness * penetration * penetration;
}

double mechanical_energy(const EnvSpec& spec, const WorldState& world) {
  double e = total_energy(spec.chain, world.arm.q, world.arm.qd);
  if (spec.has_object())
    e += 0.5 * spec.object_mass * world.object_vel->squaredNorm();
  return e;
}

}  // namespace piper::sim
