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
// Physics residuals and task-specific constraint losses as pure functionals
// over oracle terms and predicted accelerations. These are the scalar/vector
// evaluation forms; the differentiable tape builders live in
// loss_graphs.hpp in the learning layer.

#ifndef PIPER_PHYSICS_LOSSES_HPP_
#define PIPER_PHYSICS_LOSSES_HPP_

#include "piper/sim.hpp"
#include "piper/types.hpp"

namespace piper::phys {

/// Weights of the constraint terms. All must be non-negative.
struct ConstraintWeights {
  double lambda1 = 1.0;    // reach: dynamics residual
  double lambda2 = 1.0;    // reach: kinematic goal term
  double lambda_f = 0.1;   // push: work-energy term
  double lambda_m = 0.1;   // slide: impulse-momentum term
  double lambda_g = 1.0;   // grasp: force-closure term
  double beta = 0.1;       // PINN residual weight
  double lambda_phys_ppo = 0.01;   // actor penalty, on-policy
  double lambda_phys_sac = 0.005;  // actor penalty, off-policy

  void validate() const;
};

struct ResidualInputs {
  MatX M;
  VecX b;
  VecX qdd_hat;
  VecX action;
};

struct EnergyInputs {
  VecX qd;
  MatX M;
  MatX M_rate;  // finite-difference Mdot
  VecX G;
  VecX qdd_hat;
  VecX tau;
};

/// r = M qdd_hat + b - a.
VecX physics_residual(const ResidualInputs& in);

/// ||r||_2^2.
double physics_penalty(const VecX& r);

/// | qd^T M qdd_hat + 1/2 qd^T Mdot qd + qd^T G - qd^T tau |.
double energy_residual(const EnergyInputs& in);

/// lambda1 ||r_dyn||^2 + lambda2 ||ee - goal||^2.
double reach_loss(const VecX& r_dyn, const Vec2& ee, const Vec2& goal,
                  const ConstraintWeights& w);

/// running + the simulator's friction work increment for this step.
double friction_work_accumulate(double running,
                                const sim::ContactRecord& contact);

/// reach_part + lambda_f | W_fric + dE_kin - W_input | over a rollout window,
/// where W_input = sum qd^T tau dt is the work injected by the arm. With this
/// bookkeeping the penalty vanishes for exact physics even when the arm does
/// work on the block.
double push_loss(double reach_part, double w_fric, double delta_e_kin,
                 double w_input, double lambda_f);

/// reach_part + lambda_m || m_obj dv_obj - J_impact ||^2.
double slide_loss(double reach_part, double m_obj, const Vec2& dv_obj,
                  const Vec2& j_impact, double lambda_m);

/// r_fric = m a_obj + mu m g v_hat. Requires ||v_obj|| > v_stick so the unit
/// vector is defined; violating that is a contract violation.
Vec2 sliding_friction_residual(double m, const Vec2& a_obj, double mu,
                               double g, const Vec2& v_obj,
                               double v_stick = 1e-3);

/// M_comb = M_arm + J^T m_obj J.
MatX combined_mass(const MatX& M_arm, const MatX& J, double m_obj);

/// lambda_g max(0, m_obj (g + zdd_lift) - mu_grip F_grip)^2.
double grasp_loss(double m_obj, double zdd_lift, double mu_grip,
                  double f_grip, double lambda_g, double g = 9.81);

}  // namespace piper::phys

#endif  // PIPER_PHYSICS_LOSSES_HPP_
