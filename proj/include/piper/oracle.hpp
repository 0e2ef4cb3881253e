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
// The dynamics oracle: exact (M, b, tau_ext) extracted from simulator state,
// finite-difference acceleration labels, and effective torques for the
// training buffer. Deliberately independent of every learned component; this
// header must never include autodiff/pinn/rl headers.

#ifndef PIPER_ORACLE_HPP_
#define PIPER_ORACLE_HPP_

#include <optional>

#include "piper/sim.hpp"
#include "piper/types.hpp"

namespace piper::oracle {

struct OracleSample {
  MatX M;
  VecX b;
  VecX tau_ext;
  VecX qdd_obs;
  VecX tau_eff;
  /// Contact-disturbed sample: ||tau_ext||_inf exceeded the outlier
  /// threshold. Flagged, never dropped; consumers may down-weight.
  bool contact_flagged = false;
};

struct ExtractResult {
  MatX M;
  VecX b;
  VecX tau_ext;
};

/// (M, b, tau_ext) at the given state. tau_ext is passed through from the
/// contact record; b folds it in with the Newton-Euler bias so that
/// b = C qd + G - tau_ext, exactly the quantity the integrator used.
ExtractResult extract(const sim::EnvSpec& spec, const sim::WorldState& world,
                      const std::optional<sim::ContactRecord>& contact);

/// One-step backward difference (qd_next - qd_t) / dt; inverts the
/// semi-implicit integrator's velocity update exactly. dt must be > 0.
VecX fd_acceleration(const VecX& qd_t, const VecX& qd_next, double dt);

/// tau_eff = M qdd_obs + b.
VecX effective_torque(const MatX& M, const VecX& qdd_obs, const VecX& b);

/// Bundles extract + fd_acceleration + effective_torque for one recorded
/// transition.
OracleSample sample_transition(const sim::EnvSpec& spec,
                               const sim::WorldState& world_t,
                               const std::optional<sim::ContactRecord>& contact,
                               const VecX& qd_next,
                               double outlier_threshold = 1e-6);

}  // namespace piper::oracle

#endif  // PIPER_ORACLE_HPP_
