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
// Closed-form one- and two-link dynamics, written directly from the symbolic
// Lagrangian. These are deliberately independent of the CRBA/RNEA code paths:
// they are the reference oracles for the dynamics check suite and the unit
// tests, and must never call into dynamics.hpp.

#ifndef PIPER_REFERENCE_HPP_
#define PIPER_REFERENCE_HPP_

#include <cmath>
#include <functional>

#include "piper/chain_model.hpp"
#include "piper/types.hpp"

namespace piper::reference {

/// M for a single pendulum: I + m c^2 (independent of q).
inline double one_link_mass(const LinkParams& p) {
  return p.inertia_com + p.mass * p.com_offset * p.com_offset;
}

/// Gravity torque for a single pendulum with gravity vector g.
inline double one_link_gravity(const LinkParams& p, const Vec2& g, double q) {
  const Vec2 perp_u(-std::sin(q), std::cos(q));
  return -p.mass * p.com_offset * g.dot(perp_u);
}

struct TwoLinkTerms {
  Eigen::Matrix2d M;
  Eigen::Matrix2d C;       // Christoffel form
  Eigen::Vector2d C_qd;    // C * qd
  Eigen::Vector2d G;
};

/// Textbook closed-form two-link terms for arbitrary planar gravity.
inline TwoLinkTerms two_link_terms(const LinkParams& p1, const LinkParams& p2,
                                   const Vec2& g, const Eigen::Vector2d& q,
                                   const Eigen::Vector2d& qd) {
  const double m1 = p1.mass, m2 = p2.mass;
  const double l1 = p1.length;
  const double c1 = p1.com_offset, c2 = p2.com_offset;
  const double I1 = p1.inertia_com, I2 = p2.inertia_com;
  const double s2 = std::sin(q(1)), co2 = std::cos(q(1));

  TwoLinkTerms t;
  t.M(0, 0) = I1 + I2 + m1 * c1 * c1 +
              m2 * (l1 * l1 + c2 * c2 + 2.0 * l1 * c2 * co2);
  t.M(0, 1) = I2 + m2 * (c2 * c2 + l1 * c2 * co2);
  t.M(1, 0) = t.M(0, 1);
  t.M(1, 1) = I2 + m2 * c2 * c2;

  const double h = -m2 * l1 * c2 * s2;
  t.C(0, 0) = h * qd(1);
  t.C(0, 1) = h * (qd(0) + qd(1));
  t.C(1, 0) = -h * qd(0);
  t.C(1, 1) = 0.0;
  t.C_qd = t.C * qd;

  const double th1 = q(0), th12 = q(0) + q(1);
  const Vec2 pu1(-std::sin(th1), std::cos(th1));
  const Vec2 pu12(-std::sin(th12), std::cos(th12));
  t.G(0) = -(m1 * c1 * g.dot(pu1) + m2 * (l1 * g.dot(pu1) + c2 * g.dot(pu12)));
  t.G(1) = -m2 * c2 * g.dot(pu12);
  return t;
}

/// Central-difference Jacobian of f at x with step h.
inline MatX fd_jacobian(const std::function<VecX(const VecX&)>& f,
                        const VecX& x, double h) {
  const VecX f0 = f(x);
  MatX J(f0.size(), x.size());
  for (Index j = 0; j < x.size(); ++j) {
    VecX xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    J.col(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

/// Central-difference derivative of a scalar functional.
inline double fd_derivative(const std::function<double(double)>& f, double x,
                            double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace piper::reference

#endif  // PIPER_REFERENCE_HPP_
