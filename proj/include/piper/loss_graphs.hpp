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
// Tape builders for the physics losses: the differentiable counterparts of
// physics_losses.hpp, batched column-wise. Oracle quantities (M, b, Mdot, qd)
// enter as constants; network outputs and actions enter as tape values.

#ifndef PIPER_LOSS_GRAPHS_HPP_
#define PIPER_LOSS_GRAPHS_HPP_

#include <vector>

#include "piper/autodiff.hpp"

namespace piper::lg {

using ad::Mat;
using ad::Tape;
using ad::Value;

/// r = M_j qdd_hat_j + b_j - a_j per column. Ms holds one N x N matrix per
/// column; b is N x B.
Value residual_node(Tape& t, std::vector<Mat> Ms, const Mat& b, Value qdd_hat,
                    Value action);

/// mean_j ||col_j||^2 : the batch-mean squared-norm penalty (1 x 1).
Value mean_sq_colnorm(Tape& t, Value v);

/// Per-sample energy violation row (1 x B):
///   | qd^T M qdd_hat + 1/2 qd^T Mdot qd + qd^T G - qd^T tau |.
/// qd and G are constants; qdd_hat and tau are tape values.
Value energy_residual_node(Tape& t, const Mat& qd, std::vector<Mat> Ms,
                           const std::vector<Mat>& Mdots, const Mat& G,
                           Value qdd_hat, Value tau);

/// lambda1 ||r||^2 + lambda2 ||ee_err||^2, batch-meaned (1 x 1). ee_err is the
/// constant (ee - goal) column block.
Value reach_loss_node(Tape& t, Value r, const Mat& ee_err, double lambda1,
                      double lambda2);

/// reach_part + lambda_f |w_fric + delta_e_kin - w_input| (all 1 x 1 values).
Value push_loss_node(Tape& t, Value reach_part, Value w_fric,
                     Value delta_e_kin, Value w_input, double lambda_f);

/// reach_part + lambda_m || m_obj dv - j_impact ||^2, dv a (2 x 1) value.
Value slide_loss_node(Tape& t, Value reach_part, double m_obj, Value dv,
                      const Vec2& j_impact, double lambda_m);

/// m a_obj + mu m g v_hat per column; v_hat constant unit rows (2 x B).
Value friction_residual_node(Tape& t, double m, Value a_obj, double mu,
                             double g, const Mat& v_hat);

/// M_arm + J^T m_obj J with J a (2 x N) tape value.
Value combined_mass_node(Tape& t, const Mat& M_arm, Value J, double m_obj);

/// lambda_g max(0, m_obj (g + zdd) - mu_grip f_grip)^2 per column (1 x B).
Value grasp_loss_node(Tape& t, double m_obj, Value zdd, double mu_grip,
                      Value f_grip, double lambda_g, double g = 9.81);

}  // namespace piper::lg

#endif  // PIPER_LOSS_GRAPHS_HPP_
