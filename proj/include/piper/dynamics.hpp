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
// Analytic Lagrangian rigid-body dynamics for planar N-link revolute serial
// chains. All functions are pure; every quantity is expressed in the world
// frame with the base joint at the origin. The manipulator equation used
// throughout is
//
//     M(q) qdd + C(q, qd) qd + G(q) = tau + tau_ext,
//
// with the generalized bias force b(q, qd) = C qd + G - tau_ext, so that
// inverse dynamics reads tau = M qdd + b.

#ifndef PIPER_DYNAMICS_HPP_
#define PIPER_DYNAMICS_HPP_

#include "piper/chain_model.hpp"
#include "piper/types.hpp"

namespace piper {

/// Joint-space inertia matrix M(q) by the planar Composite Rigid Body
/// Algorithm: composite masses/COMs/inertias are accumulated leaf-to-root and
/// projected onto the revolute joint axes. Symmetric positive definite.
MatX mass_matrix(const ChainModel& model, const VecX& q);

/// Generalized bias force b = RNEA(q, qd, qdd=0, g, f_ext) = C qd + G - tau_ext
/// via the planar recursive Newton-Euler algorithm (forward velocity pass,
/// zero-acceleration backward force pass).
VecX bias_force(const ChainModel& model, const VecX& q, const VecX& qd,
                const MaybeExternalForce& f_ext = std::nullopt);

/// Coriolis matrix from Christoffel symbols of the first kind,
///   C_kj = sum_i c_ijk(q) qd_i,
/// with dM/dq by central finite differences (step coriolis_fd_step()).
MatX coriolis_matrix(const ChainModel& model, const VecX& q, const VecX& qd);

/// Gravity torque G(q) = bias_force(q, 0, none).
VecX gravity_vector(const ChainModel& model, const VecX& q);

/// Inverse dynamics tau = M(q) qdd + b(q, qd), computed by a single planar
/// RNEA pass with the full acceleration (not by assembling M and b).
VecX inverse_dynamics(const ChainModel& model, const VecX& q, const VecX& qd,
                      const VecX& qdd,
                      const MaybeExternalForce& f_ext = std::nullopt);

/// Forward dynamics qdd = M^{-1} (tau - b), solved with a Cholesky
/// factorization of M; throws InternalError if M is not positive definite.
VecX forward_dynamics(const ChainModel& model, const VecX& q, const VecX& qd,
                      const VecX& tau,
                      const MaybeExternalForce& f_ext = std::nullopt);

/// End-effector (tip of the last link) position.
Vec2 forward_kinematics(const ChainModel& model, const VecX& q);

/// Analytic 2xN Jacobian of forward_kinematics; rows are (dx/dq, dy/dq).
MatX ee_jacobian(const ChainModel& model, const VecX& q);

/// Positions of every joint (N entries) plus the end effector (last entry).
std::vector<Vec2> joint_positions(const ChainModel& model, const VecX& q);

/// Total mechanical energy E = 1/2 qd^T M(q) qd + P(q), with the potential
/// measured from the world origin height: P = sum_i m_i (-g) . x_com,i.
double total_energy(const ChainModel& model, const VecX& q, const VecX& qd);

/// Potential energy alone (same zero reference as total_energy).
double potential_energy(const ChainModel& model, const VecX& q);

/// Finite-difference inertia-matrix rate (M_next - M_t) / dt. dt must be > 0.
MatX mass_matrix_rate(const MatX& M_t, const MatX& M_next, double dt);

/// Analytic-in-the-limit Mdot = sum_i dM/dq_i qd_i with dM/dq by central
/// differences; reference implementation for skew-symmetry and rate checks.
MatX mass_matrix_rate_christoffel(const ChainModel& model, const VecX& q,
                                  const VecX& qd);

/// Step used for central finite differences of M(q).
constexpr double coriolis_fd_step() { return 1e-6; }

}  // namespace piper

#endif  // PIPER_DYNAMICS_HPP_
