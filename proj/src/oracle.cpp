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

#include "piper/oracle.hpp"

#include "piper/dynamics.hpp"

namespace piper::oracle {

ExtractResult extract(const sim::EnvSpec& spec, const sim::WorldState& world,
                      const std::optional<sim::ContactRecord>& contact) {
  const int n = spec.chain.n_links();
  ExtractResult out;
  out.M = mass_matrix(spec.chain, world.arm.q);
  out.tau_ext = contact && contact->tau_ext.size() == n
                    ? contact->tau_ext
                    : VecX::Zero(n);
  out.b = bias_force(spec.chain, world.arm.q, world.arm.qd) - out.tau_ext;
  return out;
}

VecX fd_acceleration(const VecX& qd_t, const VecX& qd_next, double dt) {
  require(dt > 0.0, "fd_acceleration: dt must be > 0");
  require(qd_t.size() == qd_next.size(),
          "fd_acceleration: dimension mismatch");
  return (qd_next - qd_t) / dt;
}

VecX effective_torque(const MatX& M, const VecX& qdd_obs, const VecX& b) {
  require(M.rows() == qdd_obs.size() && M.cols() == qdd_obs.size() &&
              b.size() == qdd_obs.size(),
          "effective_torque: dimension mismatch");
  return M * qdd_obs + b;
}

OracleSample sample_transition(const sim::EnvSpec& spec,
                               const sim::WorldState& world_t,
                               const std::optional<sim::ContactRecord>& contact,
                               const VecX& qd_next, double outlier_threshold) {
  auto [M, b, tau_ext] = extract(spec, world_t, contact);
  OracleSample s;
  s.qdd_obs = fd_acceleration(world_t.arm.qd, qd_next, spec.dt);
  s.tau_eff = effective_torque(M, s.qdd_obs, b);
  s.M = std::move(M);
  s.b = std::move(b);
  s.tau_ext = std::move(tau_ext);
  s.contact_flagged = s.tau_ext.cwiseAbs().maxCoeff() > outlier_threshold;
  return s;
}

}  // namespace piper::oracle
