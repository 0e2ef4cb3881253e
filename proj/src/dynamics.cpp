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

#include "piper/dynamics.hpp"

#include <cmath>
#include <vector>

namespace piper {

namespace {

struct FramePass {
  std::vector<double> theta;  // cumulative link angles
  std::vector<Vec2> u;        // link axis unit vectors
  std::vector<Vec2> p;        // joint positions, p[0] = origin
  Vec2 tip;                   // end-effector position
};

FramePass frames(const ChainModel& model, const VecX& q) {
  const int n = model.n_links();
  require(q.size() == n, "dynamics: q has wrong dimension");
  FramePass f;
  f.theta.resize(static_cast<size_t>(n));
  f.u.resize(static_cast<size_t>(n));
  f.p.resize(static_cast<size_t>(n));
  double theta = 0.0;
  Vec2 p = Vec2::Zero();
  for (int i = 0; i < n; ++i) {
    theta += q(i);
    f.theta[i] = theta;
    f.u[i] = Vec2(std::cos(theta), std::sin(theta));
    f.p[i] = p;
    p += model.link(i).length * f.u[i];
  }
  f.tip = p;
  return f;
}

}  // namespace

std::vector<Vec2> joint_positions(const ChainModel& model, const VecX& q) {
  const FramePass f = frames(model, q);
  std::vector<Vec2> out = f.p;
  out.push_back(f.tip);
  return out;
}

MatX mass_matrix(const ChainModel& model, const VecX& q) {
  const int n = model.n_links();
  const FramePass f = frames(model, q);

  // Leaf-to-root composite accumulation: mass, COM, inertia about the
  // composite COM for the subtree rooted at each joint.
  std::vector<double> comp_mass(static_cast<size_t>(n));
  std::vector<Vec2> comp_com(static_cast<size_t>(n));
  std::vector<double> comp_inertia(static_cast<size_t>(n));
  for (int i = n - 1; i >= 0; --i) {
    const auto& link = model.link(i);
    const Vec2 x_i = f.p[i] + link.com_offset * f.u[i];
    if (i == n - 1) {
      comp_mass[i] = link.mass;
      comp_com[i] = x_i;
      comp_inertia[i] = link.inertia_com;
    } else {
      const double m_sub = comp_mass[i + 1];
      const double m_tot = link.mass + m_sub;
      const Vec2 com = (link.mass * x_i + m_sub * comp_com[i + 1]) / m_tot;
      const double d_link = (x_i - com).squaredNorm();
      const double d_sub = (comp_com[i + 1] - com).squaredNorm();
      comp_mass[i] = m_tot;
      comp_com[i] = com;
      comp_inertia[i] = link.inertia_com + link.mass * d_link +
                        comp_inertia[i + 1] + m_sub * d_sub;
    }
  }

  // Project the composite inertia supported by the distal joint onto both
  // joint axes: M_ij = Ic_j + Mc_j (Xc_j - p_i) . (Xc_j - p_j), i <= j.
  MatX M(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i <= j; ++i) {
      const double val =
          comp_inertia[j] +
          comp_mass[j] * (comp_com[j] - f.p[i]).dot(comp_com[j] - f.p[j]);
      M(i, j) = val;
      M(j, i) = val;
    }
  }
  return M;
}

namespace {

// Planar RNEA in world coordinates. The base-frame fictitious acceleration
// -g folds gravity into the inertial forces.
VecX rnea(const ChainModel& model, const VecX& q, const VecX& qd,
          const VecX& qdd, const MaybeExternalForce& f_ext) {
  const int n = model.n_links();
  require(qd.size() == n, "dynamics: qd has wrong dimension");
  require(qdd.size() == n, "dynamics: qdd has wrong dimension");
  const FramePass f = frames(model, q);

  std::vector<double> omega(static_cast<size_t>(n));
  std::vector<double> alpha(static_cast<size_t>(n));
  std::vector<Vec2> a_com(static_cast<size_t>(n));
  std::vector<Vec2> r_com(static_cast<size_t>(n));  // joint i -> COM i
  std::vector<Vec2> r_len(static_cast<size_t>(n));  // joint i -> joint i+1

  Vec2 a_joint = -model.gravity();
  double w = 0.0, al = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& link = model.link(i);
    w += qd(i);
    al += qdd(i);
    omega[i] = w;
    alpha[i] = al;
    r_com[i] = link.com_offset * f.u[i];
    r_len[i] = link.length * f.u[i];
    a_com[i] = a_joint + al * perp(r_com[i]) - w * w * r_com[i];
    a_joint += al * perp(r_len[i]) - w * w * r_len[i];
  }

  VecX tau(n);
  Vec2 f_child = Vec2::Zero();
  double n_child = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    const auto& link = model.link(i);
    const Vec2 F = link.mass * a_com[i];
    const double N = link.inertia_com * alpha[i];
    Vec2 f_i = F + f_child;
    double n_i = N + n_child + cross2(r_com[i], F) + cross2(r_len[i], f_child);
    if (f_ext && i == n - 1) {
      // External force applied at the tip of the last link.
      f_i -= f_ext->force;
      n_i -= cross2(r_len[i], f_ext->force);
    }
    tau(i) = n_i;
    f_child = f_i;
    n_child = n_i;
  }
  return tau;
}

}  // namespace

VecX bias_force(const ChainModel& model, const VecX& q, const VecX& qd,
                const MaybeExternalForce& f_ext) {
  return rnea(model, q, qd, VecX::Zero(model.n_links()), f_ext);
}

VecX gravity_vector(const ChainModel& model, const VecX& q) {
  return bias_force(model, q, VecX::Zero(model.n_links()), std::nullopt);
}

MatX coriolis_matrix(const ChainModel& model, const VecX& q, const VecX& qd) {
  const int n = model.n_links();
  require(q.size() == n && qd.size() == n,
          "dynamics: state has wrong dimension");
  const double h = coriolis_fd_step();

  std::vector<MatX> dM(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    VecX qp = q, qm = q;
    qp(i) += h;
    qm(i) -= h;
    dM[i] = (mass_matrix(model, qp) - mass_matrix(model, qm)) / (2.0 * h);
  }

  MatX C = MatX::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        const double c_ijk =
            0.5 * (dM[i](k, j) + dM[j](k, i) - dM[k](i, j));
        sum += c_ijk * qd(i);
      }
      C(k, j) = sum;
    }
  }
  return C;
}

VecX inverse_dynamics(const ChainModel& model, const VecX& q, const VecX& qd,
                      const VecX& qdd, const MaybeExternalForce& f_ext) {
  return rnea(model, q, qd, qdd, f_ext);
}

VecX forward_dynamics(const ChainModel& model, const VecX& q, const VecX& qd,
                      const VecX& tau, const MaybeExternalForce& f_ext) {
  require(tau.size() == model.n_links(), "dynamics: tau has wrong dimension");
  const MatX M = mass_matrix(model, q);
  const VecX b = bias_force(model, q, qd, f_ext);
  Eigen::LLT<MatX> llt(M);
  if (llt.info() != Eigen::Success)
    throw InternalError("forward_dynamics: mass matrix not positive definite");
  return llt.solve(tau - b);
}

Vec2 forward_kinematics(const ChainModel& model, const VecX& q) {
  return frames(model, q).tip;
}

MatX ee_jacobian(const ChainModel& model, const VecX& q) {
  const int n = model.n_links();
  const FramePass f = frames(model, q);
  MatX J(2, n);
  for (int i = 0; i < n; ++i) {
    const Vec2 col = perp(f.tip - f.p[i]);
    J(0, i) = col.x();
    J(1, i) = col.y();
  }
  return J;
}

double potential_energy(const ChainModel& model, const VecX& q) {
  const FramePass f = frames(model, q);
  double P = 0.0;
  for (int i = 0; i < model.n_links(); ++i) {
    const auto& link = model.link(i);
    const Vec2 x_com = f.p[i] + link.com_offset * f.u[i];
    P += link.mass * (-model.gravity()).dot(x_com);
  }
  return P;
}

double total_energy(const ChainModel& model, const VecX& q, const VecX& qd) {
  const MatX M = mass_matrix(model, q);
  return 0.5 * qd.dot(M * qd) + potential_energy(model, q);
}

MatX mass_matrix_rate(const MatX& M_t, const MatX& M_next, double dt) {
  require(dt > 0.0, "mass_matrix_rate: dt must be > 0");
  require(M_t.rows() == M_next.rows() && M_t.cols() == M_next.cols(),
          "mass_matrix_rate: shape mismatch");
  return (M_next - M_t) / dt;
}

MatX mass_matrix_rate_christoffel(const ChainModel& model, const VecX& q,
                                  const VecX& qd) {
  const int n = model.n_links();
  const double h = coriolis_fd_step();
  MatX Mdot = MatX::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    VecX qp = q, qm = q;
    qp(i) += h;
    qm(i) -= h;
    Mdot += (mass_matrix(model, qp) - mass_matrix(model, qm)) / (2.0 * h) *
            qd(i);
  }
  return Mdot;
}

}  // namespace piper
