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

#include "piper/physics_losses.hpp"

#include <cmath>

namespace piper::phys {

void ConstraintWeights::validate() const {
  const double all[] = {lambda1, lambda2,        lambda_f,
                        lambda_m, lambda_g,      beta,
                        lambda_phys_ppo, lambda_phys_sac};
  for (double v : all)
    require(std::isfinite(v) && v >= 0.0,
            "ConstraintWeights: all weights must be finite and >= 0");
}

VecX physics_residual(const ResidualInputs& in) {
  const Index n = in.qdd_hat.size();
  require(in.M.rows() == n && in.M.cols() == n && in.b.size() == n &&
              in.action.size() == n,
          "physics_residual: shape mismatch");
  return in.M * in.qdd_hat + in.b - in.action;
}

double physics_penalty(const VecX& r) { return r.squaredNorm(); }

double energy_residual(const EnergyInputs& in) {
  const Index n = in.qd.size();
  require(in.M.rows() == n && in.M_rate.rows() == n && in.G.size() == n &&
              in.qdd_hat.size() == n && in.tau.size() == n,
          "energy_residual: shape mismatch");
  return std::abs(in.qd.dot(in.M * in.qdd_hat) +
                  0.5 * in.qd.dot(in.M_rate * in.qd) + in.qd.dot(in.G) -
                  in.qd.dot(in.tau));
}

double reach_loss(const VecX& r_dyn, const Vec2& ee, const Vec2& goal,
                  const ConstraintWeights& w) {
  return w.lambda1 * r_dyn.squaredNorm() +
         w.lambda2 * (ee - goal).squaredNorm();
}

double friction_work_accumulate(double running,
                                const sim::ContactRecord& contact) {
  return running + contact.friction_work_increment;
}

double push_loss(double reach_part, double w_fric, double delta_e_kin,
                 double w_input, double lambda_f) {
  return reach_part + lambda_f * std::abs(w_fric + delta_e_kin - w_input);
}

double slide_loss(double reach_part, double m_obj, const Vec2& dv_obj,
                  const Vec2& j_impact, double lambda_m) {
  return reach_part + lambda_m * (m_obj * dv_obj - j_impact).squaredNorm();
}

Vec2 sliding_friction_residual(double m, const Vec2& a_obj, double mu,
                               double g, const Vec2& v_obj, double v_stick) {
  require(v_obj.norm() > v_stick,
          "sliding_friction_residual: object is below the slip threshold");
  return m * a_obj + mu * m * g * v_obj.normalized();
}

MatX combined_mass(const MatX& M_arm, const MatX& J, double m_obj) {
  require(J.rows() == 2 && J.cols() == M_arm.rows(),
          "combined_mass: jacobian shape mismatch");
  require(m_obj >= 0.0, "combined_mass: object mass must be >= 0");
  return M_arm + J.transpose() * (m_obj * J);
}

double grasp_loss(double m_obj, double zdd_lift, double mu_grip,
                  double f_grip, double lambda_g, double g) {
  const double gap = m_obj * (g + zdd_lift) - mu_grip * f_grip;
  const double hinge = gap > 0.0 ? gap : 0.0;
  return lambda_g * hinge * hinge;
}

}  // namespace piper::phys
