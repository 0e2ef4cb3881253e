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

#include "piper/checks.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "piper/dynamics.hpp"
#include "piper/loss_graphs.hpp"
#include "piper/physics_losses.hpp"
#include "piper/pinn.hpp"
#include "piper/reference.hpp"
#include "piper/rl.hpp"
#include "piper/rng.hpp"
#include "piper/sim.hpp"

namespace piper::checks {

namespace {

ChainModel random_chain(Rng& rng, int n_links, bool vertical) {
  std::vector<LinkParams> links(static_cast<size_t>(n_links));
  for (auto& p : links) {
    p.length = rng.uniform(0.3, 1.2);
    p.mass = rng.uniform(0.2, 2.0);
    p.com_offset = p.length * rng.uniform(0.2, 0.8);
    p.inertia_com = p.mass * p.length * p.length / 12.0 * rng.uniform(0.5, 1.5);
  }
  const Vec2 g = vertical ? Vec2(0.0, -9.81) : Vec2(0.0, 0.0);
  return ChainModel::make(std::move(links), g,
                          VecX::Constant(n_links, 50.0));
}

VecX random_vec(Rng& rng, int n, double lo, double hi) {
  VecX v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

CheckResult bounded(const std::string& name, double worst, double tol) {
  CheckResult r;
  r.name = name;
  r.pass = worst <= tol;
  std::ostringstream ss;
  ss << "worst " << worst << " vs tolerance " << tol;
  r.detail = ss.str();
  return r;
}

}  // namespace

std::vector<CheckResult> dynamics_checks(std::uint64_t seed) {
  Rng rng(seed);
  const int kStates = 1000;
  const int link_counts[] = {1, 2, 3, 5};

  double worst_sym = 0.0;
  bool all_spd = true;
  double worst_crba = 0.0;
  double worst_bias = 0.0;
  double worst_skew = 0.0;
  for (int trial = 0; trial < kStates; ++trial) {
    const int n = link_counts[rng.uniform_index(4)];
    const auto model = random_chain(rng, n, trial % 2 == 0);
    const VecX q = random_vec(rng, n, -3.14, 3.14);
    const VecX qd = random_vec(rng, n, -2.0, 2.0);

    const MatX M = mass_matrix(model, q);
    worst_sym = std::max(worst_sym,
                         (M - M.transpose()).cwiseAbs().maxCoeff());
    if (Eigen::LLT<MatX>(M).info() != Eigen::Success) all_spd = false;

    const auto model_g0 = model.without_gravity();
    for (int j = 0; j < n; ++j) {
      VecX e = VecX::Zero(n);
      e(j) = 1.0;
      const VecX col = inverse_dynamics(model_g0, q, VecX::Zero(n), e);
      worst_crba =
          std::max(worst_crba, (M.col(j) - col).cwiseAbs().maxCoeff());
    }

    const MatX C = coriolis_matrix(model, q, qd);
    const VecX lhs = C * qd + gravity_vector(model, q);
    worst_bias = std::max(
        worst_bias, (lhs - bias_force(model, q, qd)).cwiseAbs().maxCoeff());

    const VecX z = random_vec(rng, n, -1.0, 1.0);
    const MatX Mdot = mass_matrix_rate_christoffel(model, q, qd);
    const double skew = std::abs(z.dot((Mdot - 2.0 * C) * z)) /
                        (z.squaredNorm() * (1.0 + qd.norm()));
    worst_skew = std::max(worst_skew, skew);
  }

  double worst_two_link = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto model = random_chain(rng, 2, trial % 2 == 0);
    const Eigen::Vector2d q(rng.uniform(-3.14, 3.14), rng.uniform(-3.14, 3.14));
    const Eigen::Vector2d qd(rng.uniform(-2, 2), rng.uniform(-2, 2));
    const auto ref = reference::two_link_terms(model.link(0), model.link(1),
                                               model.gravity(), q, qd);
    const MatX M = mass_matrix(model, VecX(q));
    const VecX c_qd = coriolis_matrix(model, VecX(q), VecX(qd)) * VecX(qd);
    const VecX G = gravity_vector(model, VecX(q));
    worst_two_link = std::max({worst_two_link,
                               (M - MatX(ref.M)).cwiseAbs().maxCoeff(),
                               (c_qd - VecX(ref.C_qd)).cwiseAbs().maxCoeff(),
                               (G - VecX(ref.G)).cwiseAbs().maxCoeff()});
  }

  std::vector<CheckResult> out;
  out.push_back(bounded("mass matrix symmetric", worst_sym, 1e-10));
  out.push_back({"mass matrix Cholesky-factorizable", all_spd,
                 all_spd ? "all states SPD" : "LLT failed"});
  out.push_back(bounded("CRBA column vs unit-acceleration RNEA", worst_crba,
                        1e-8));
  out.push_back(bounded("two-link closed-form agreement", worst_two_link,
                        1e-6));
  out.push_back(bounded("|z^T (Mdot - 2C) z| scaled", worst_skew, 1e-5));
  out.push_back(bounded("RNEA bias vs C qd + G", worst_bias, 1e-6));
  return out;
}

std::vector<CheckResult> energy_checks() {
  auto drift = [](double dt) {
    sim::EnvSpec spec = sim::EnvSpec::defaults(sim::EnvId::reach2d, 1);
    spec.chain = ChainModel::uniform(1, 1.0, 1.0, 50.0, Vec2(0, -9.81));
    spec.dt = dt;
    sim::WorldState world;
    world.arm.q = VecX::Constant(1, -M_PI / 2.0 + 1.0);
    world.arm.qd = VecX::Zero(1);
    const double e0 = total_energy(spec.chain, world.arm.q, world.arm.qd);
    double worst = 0.0;
    const int steps = static_cast<int>(5.0 / dt);
    for (int k = 0; k < steps; ++k) {
      world = sim::step(spec, world, VecX::Zero(1)).first;
      const double e = total_energy(spec.chain, world.arm.q, world.arm.qd);
      worst = std::max(worst, std::abs(e - e0) / std::abs(e0));
    }
    return worst;
  };
  const double d1 = drift(0.002);
  const double d2 = drift(0.001);
  const double ratio = d1 / d2;

  std::vector<CheckResult> out;
  out.push_back(bounded("pendulum energy drift over 5 s at dt=0.002", d1,
                        0.01));
  CheckResult conv;
  conv.name = "drift halves when dt halves";
  conv.pass = ratio >= 1.6 && ratio <= 2.4;
  std::ostringstream ss;
  ss << "ratio " << ratio << " vs [1.6, 2.4]";
  conv.detail = ss.str();
  out.push_back(conv);
  return out;
}

std::vector<CheckResult> friction_checks() {
  std::vector<CheckResult> out;
  {
    sim::EnvSpec spec = sim::EnvSpec::defaults(sim::EnvId::push2d, 2);
    sim::WorldState world;
    world.arm.q = VecX::Constant(2, 0.3);
    world.arm.qd = VecX::Zero(2);
    world.object_pos = Vec2(5.0, 0.0);
    const double v0 = 1.2;
    world.object_vel = Vec2(v0, 0.0);
    const Vec2 start = *world.object_pos;
    for (int k = 0; k < 4000 && world.object_vel->norm() > 0.0; ++k)
      world = sim::step(spec, world, VecX::Zero(2)).first;
    const double distance = (*world.object_pos - start).norm();
    const double expected = v0 * v0 / (2.0 * spec.friction_mu * spec.g_normal);
    out.push_back(bounded("free-puck stopping distance vs v0^2/(2 mu g)",
                          std::abs(distance - expected) / expected, 0.02));
  }
  {
    const sim::EnvSpec spec = sim::EnvSpec::defaults(sim::EnvId::slide2d, 2);
    auto [world, goal] = sim::reset(spec, 3);
    const Vec2 dir = (*world.object_pos -
                      forward_kinematics(spec.chain, world.arm.q))
                         .normalized();
    const MatX J = ee_jacobian(spec.chain, world.arm.q);
    world.arm.qd =
        J.transpose() * (J * J.transpose()).ldlt().solve(Vec2(3.0 * dir));
    const Vec2 v_before = *world.object_vel;
    Vec2 impulse = Vec2::Zero(), v_after = v_before;
    bool seen = false;
    for (int k = 0; k < 400; ++k) {
      auto [next, rec] = sim::step(spec, world, VecX::Zero(2));
      world = next;
      if (rec.event_active) {
        seen = true;
        impulse = rec.ee_object_impulse;
        v_after = *world.object_vel;
      } else if (seen) {
        break;
      }
    }
    const double err =
        seen ? (spec.object_mass * (v_after - v_before) - impulse).norm() /
                   impulse.norm()
             : 1.0;
    out.push_back(bounded("contact-event impulse vs m dv", err, 0.02));
  }
  return out;
}

std::vector<CheckResult> residual_checks(std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(3));
    const auto model = random_chain(rng, n, trial % 2 == 0);
    const VecX q = random_vec(rng, n, -3.14, 3.14);
    const VecX qd = random_vec(rng, n, -2.0, 2.0);
    const VecX a = random_vec(rng, n, -10.0, 10.0);
    const VecX qdd = forward_dynamics(model, q, qd, a);
    const VecX r = phys::physics_residual(
        {mass_matrix(model, q), bias_force(model, q, qd), qdd, a});
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  return {bounded("physics residual zero case (r = 0 at exact dynamics)",
                  worst, 1e-10)};
}

std::vector<CheckResult> gradient_checks(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> out;
  const sim::EnvSpec spec = sim::EnvSpec::defaults(sim::EnvId::reach2d, 2);
  const int obs_dim = sim::observation_dim(spec);

  // A small buffer of real transitions.
  rl::ReplayBuffer buffer(128);
  {
    Rng env_rng = rng.split("collect");
    auto [world, goal] = sim::reset(spec, env_rng.next_u64());
    for (int k = 0; k < 128; ++k) {
      VecX tau(2);
      for (int i = 0; i < 2; ++i)
        tau(i) = env_rng.uniform(-spec.chain.torque_limit()(i),
                                 spec.chain.torque_limit()(i));
      const VecX obs = sim::observe(spec, world, goal);
      const sim::WorldState before = world;
      auto [next, rec] = sim::step(spec, world, tau);
      rl::TransitionRecord r;
      r.obs = obs;
      r.action = tau;
      r.qdd_obs = (next.arm.qd - before.arm.qd) / spec.dt;
      r.M = mass_matrix(spec.chain, before.arm.q);
      r.b = bias_force(spec.chain, before.arm.q, before.arm.qd);
      r.qd = before.arm.qd;
      r.gravity = gravity_vector(spec.chain, before.arm.q);
      r.m_rate = mass_matrix_rate(
          r.M, mass_matrix(spec.chain, next.arm.q), spec.dt);
      buffer.push(std::move(r));
      world = next;
    }
  }
  std::vector<size_t> idx(64);
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  // PINN loss (prediction MSE + beta residual + energy term).
  {
    Rng net_rng = rng.split("pinn");
    pinn::PinnModel pm = pinn::PinnModel::make(obs_dim, 2, {16, 16}, net_rng);
    const pinn::PinnBatch batch = pinn::make_pinn_batch(buffer, idx, true, 0.5);
    auto loss = [&](const ad::Network& n, ad::Gradients* sink) {
      pinn::PinnModel probe{n, pm.norm, pm.out_norm};
      return pinn::pinn_loss(probe, batch, 0.1, 0.1, sink).total;
    };
    Rng dir_rng = rng.split("pinn_dirs");
    out.push_back(bounded("PINN loss gradient vs finite differences",
                          ad::grad_check(pm.net, loss, dir_rng, 40, 1e-5),
                          1e-4));
  }

  // Actor physics penalty through M(q) Phi(s, pi(s)).
  {
    Rng net_rng = rng.split("penalty");
    pinn::PinnModel pm = pinn::PinnModel::make(obs_dim, 2, {16, 16}, net_rng);
    rl::GaussianPolicy policy = rl::GaussianPolicy::make(
        obs_dim, 2, {16, 16}, spec.chain.torque_limit(), net_rng);
    const rl::PenaltyBatch pb = rl::make_penalty_batch(buffer, idx);
    auto loss = [&](const ad::Network& n, ad::Gradients* sink) {
      rl::GaussianPolicy probe{n, policy.tau_max};
      ad::Gradients scratch = ad::Gradients::zeros_like(n);
      return rl::piper_penalty(probe, pm, pb, sink ? sink : &scratch, 1.0);
    };
    Rng dir_rng = rng.split("penalty_dirs");
    out.push_back(bounded(
        "actor physics penalty gradient (through M Phi(s, pi(s)))",
        ad::grad_check(policy.net, loss, dir_rng, 40, 1e-5), 1e-4));
  }

  // Energy residual in qdd_hat and tau.
  {
    const auto model = spec.chain;
    const int B = 4;
    MatX qd(2, B), G(2, B), qdd(2, B), tau(2, B);
    std::vector<MatX> Ms, Mdots;
    for (int j = 0; j < B; ++j) {
      const VecX qj = random_vec(rng, 2, -2, 2);
      const VecX qdj = random_vec(rng, 2, -2, 2);
      qd.col(j) = qdj;
      G.col(j) = gravity_vector(model, qj);
      qdd.col(j) = random_vec(rng, 2, -5, 5);
      tau.col(j) = random_vec(rng, 2, -5, 5);
      Ms.push_back(mass_matrix(model, qj));
      Mdots.push_back(mass_matrix_rate_christoffel(model, qj, qdj));
    }
    auto eval = [&](const MatX& qdd_v, const MatX& tau_v, MatX* gq) {
      ad::Tape t;
      ad::Value qv = t.input(qdd_v);
      ad::Value tv = t.input(tau_v);
      ad::Value row = lg::energy_residual_node(t, qd, Ms, Mdots, G, qv, tv);
      ad::Value loss = ad::sum(t, row);
      t.backward(loss);
      if (gq) *gq = t.grad(qv);
      return t.scalar(loss);
    };
    MatX gq;
    eval(qdd, tau, &gq);
    double worst = 0.0;
    const double h = 1e-6;
    for (Index i = 0; i < qdd.size(); ++i) {
      MatX p = qdd, m = qdd;
      p.data()[i] += h;
      m.data()[i] -= h;
      const double fd =
          (eval(p, tau, nullptr) - eval(m, tau, nullptr)) / (2 * h);
      worst = std::max(worst,
                       std::abs(fd - gq.data()[i]) /
                           std::max({std::abs(fd), std::abs(gq.data()[i]),
                                     1e-8}));
    }
    out.push_back(bounded("energy residual gradient", worst, 1e-4));
  }

  // Task losses: reach (through the residual), push, slide, friction,
  // combined mass, grasp.
  {
    double worst = 0.0;
    const double h = 1e-6;
    auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
    };

    // reach through residual in (qdd, a).
    {
      const auto model = spec.chain;
      const int B = 3;
      MatX b(2, B), qdd(2, B), act(2, B), ee(2, B);
      std::vector<MatX> Ms;
      for (int j = 0; j < B; ++j) {
        const VecX qj = random_vec(rng, 2, -2, 2);
        Ms.push_back(mass_matrix(model, qj));
        b.col(j) = bias_force(model, qj, random_vec(rng, 2, -1, 1));
        qdd.col(j) = random_vec(rng, 2, -5, 5);
        act.col(j) = random_vec(rng, 2, -5, 5);
        ee.col(j) = random_vec(rng, 2, -0.5, 0.5);
      }
      auto eval = [&](const MatX& qv, const MatX& av, MatX* gq, MatX* ga) {
        ad::Tape t;
        ad::Value q_in = t.input(qv);
        ad::Value a_in = t.input(av);
        ad::Value r = lg::residual_node(t, Ms, b, q_in, a_in);
        ad::Value loss = lg::reach_loss_node(t, r, ee, 0.8, 1.3);
        t.backward(loss);
        if (gq) *gq = t.grad(q_in);
        if (ga) *ga = t.grad(a_in);
        return t.scalar(loss);
      };
      MatX gq, ga;
      eval(qdd, act, &gq, &ga);
      for (Index i = 0; i < qdd.size(); ++i) {
        MatX p = qdd, m = qdd;
        p.data()[i] += h;
        m.data()[i] -= h;
        worst = std::max(worst, rel(gq.data()[i],
                                    (eval(p, act, nullptr, nullptr) -
                                     eval(m, act, nullptr, nullptr)) /
                                        (2 * h)));
        MatX pa = act, ma = act;
        pa.data()[i] += h;
        ma.data()[i] -= h;
        worst = std::max(worst, rel(ga.data()[i],
                                    (eval(qdd, pa, nullptr, nullptr) -
                                     eval(qdd, ma, nullptr, nullptr)) /
                                        (2 * h)));
      }
    }

    // push in its scalar inputs.
    {
      auto eval = [&](double wf, double de, double wi, double* g) {
        ad::Tape t;
        ad::Value wfv = t.input(MatX::Constant(1, 1, wf));
        ad::Value dev = t.input(MatX::Constant(1, 1, de));
        ad::Value wiv = t.input(MatX::Constant(1, 1, wi));
        ad::Value loss = lg::push_loss_node(
            t, t.constant(MatX::Constant(1, 1, 0.4)), wfv, dev, wiv, 0.7);
        t.backward(loss);
        if (g) {
          g[0] = t.grad(wfv)(0, 0);
          g[1] = t.grad(dev)(0, 0);
          g[2] = t.grad(wiv)(0, 0);
        }
        return t.scalar(loss);
      };
      double g[3];
      eval(0.9, -0.3, 0.2, g);
      worst = std::max(worst, rel(g[0], (eval(0.9 + h, -0.3, 0.2, nullptr) -
                                         eval(0.9 - h, -0.3, 0.2, nullptr)) /
                                            (2 * h)));
      worst = std::max(worst, rel(g[1], (eval(0.9, -0.3 + h, 0.2, nullptr) -
                                         eval(0.9, -0.3 - h, 0.2, nullptr)) /
                                            (2 * h)));
      worst = std::max(worst, rel(g[2], (eval(0.9, -0.3, 0.2 + h, nullptr) -
                                         eval(0.9, -0.3, 0.2 - h, nullptr)) /
                                            (2 * h)));
    }

    // slide in delta-v.
    {
      const Vec2 j_imp(0.12, -0.05);
      auto eval = [&](const Vec2& dv, Vec2* g) {
        ad::Tape t;
        ad::Value dvv = t.input(MatX(dv));
        ad::Value loss = lg::slide_loss_node(
            t, t.constant(MatX::Constant(1, 1, 0.0)), 0.1, dvv, j_imp, 0.6);
        t.backward(loss);
        if (g) *g = Vec2(t.grad(dvv));
        return t.scalar(loss);
      };
      Vec2 g;
      const Vec2 dv(1.2, -0.8);
      eval(dv, &g);
      for (int i = 0; i < 2; ++i) {
        Vec2 p = dv, m = dv;
        p(i) += h;
        m(i) -= h;
        worst = std::max(
            worst, rel(g(i), (eval(p, nullptr) - eval(m, nullptr)) / (2 * h)));
      }
    }

    // friction residual in a_obj.
    {
      MatX vhat(2, 1);
      vhat.col(0) = Vec2(0.7, -0.2).normalized();
      auto eval = [&](const Vec2& a, Vec2* g) {
        ad::Tape t;
        ad::Value av = t.input(MatX(a));
        ad::Value r = lg::friction_residual_node(t, 0.1, av, 0.5, 9.81, vhat);
        ad::Value loss = ad::sum(t, ad::square(t, r));
        t.backward(loss);
        if (g) *g = Vec2(t.grad(av));
        return t.scalar(loss);
      };
      Vec2 g;
      const Vec2 a(-2.0, 1.0);
      eval(a, &g);
      for (int i = 0; i < 2; ++i) {
        Vec2 p = a, m = a;
        p(i) += h;
        m(i) -= h;
        worst = std::max(
            worst, rel(g(i), (eval(p, nullptr) - eval(m, nullptr)) / (2 * h)));
      }
    }

    // combined mass in J.
    {
      const auto model = spec.chain;
      const VecX q = random_vec(rng, 2, -2, 2);
      const MatX M = mass_matrix(model, q);
      const MatX J0 = ee_jacobian(model, q);
      auto eval = [&](const MatX& J, MatX* g) {
        ad::Tape t;
        ad::Value Jv = t.input(J);
        ad::Value Mc = lg::combined_mass_node(t, M, Jv, 0.4);
        ad::Value loss = ad::sum(t, ad::square(t, Mc));
        t.backward(loss);
        if (g) *g = t.grad(Jv);
        return t.scalar(loss);
      };
      MatX g;
      eval(J0, &g);
      for (Index i = 0; i < J0.size(); ++i) {
        MatX p = J0, m = J0;
        p.data()[i] += h;
        m.data()[i] -= h;
        worst = std::max(worst, rel(g.data()[i],
                                    (eval(p, nullptr) - eval(m, nullptr)) /
                                        (2 * h)));
      }
    }

    // grasp in (zdd, F_grip), active region.
    {
      auto eval = [&](double zdd, double fg, double* g) {
        ad::Tape t;
        ad::Value zv = t.input(MatX::Constant(1, 1, zdd));
        ad::Value fv = t.input(MatX::Constant(1, 1, fg));
        ad::Value loss =
            ad::sum(t, lg::grasp_loss_node(t, 0.1, zv, 0.5, fv, 1.0));
        t.backward(loss);
        if (g) {
          g[0] = t.grad(zv)(0, 0);
          g[1] = t.grad(fv)(0, 0);
        }
        return t.scalar(loss);
      };
      double g[2];
      eval(0.0, 1.0, g);
      worst = std::max(worst, rel(g[0], (eval(h, 1.0, nullptr) -
                                         eval(-h, 1.0, nullptr)) /
                                            (2 * h)));
      worst = std::max(worst, rel(g[1], (eval(0.0, 1.0 + h, nullptr) -
                                         eval(0.0, 1.0 - h, nullptr)) /
                                            (2 * h)));
    }

    out.push_back(bounded("task constraint loss gradients", worst, 1e-4));
  }
  return out;
}

bool all_pass(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

void print_report(std::ostream& os, const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    os << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.detail
       << ")\n";
}

}  // namespace piper::checks
