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

#ifndef PIPER_CHAIN_MODEL_HPP_
#define PIPER_CHAIN_MODEL_HPP_

#include <optional>
#include <string>
#include <vector>

#include "piper/types.hpp"

namespace piper {

/// One rigid link of a planar revolute chain.
///
/// The link frame sits at the proximal joint; the center of mass lies
/// `com_offset` metres along the link axis, with `inertia_com` the rotational
/// inertia about the COM. `inertia_com` defaults to the uniform-rod value
/// m*l^2/12 when omitted from a model file.
struct LinkParams {
  double length = 0.0;       // m, > 0
  double mass = 0.0;         // kg, > 0
  double com_offset = 0.0;   // m, in [0, length]
  double inertia_com = 0.0;  // kg m^2, >= 0
};

/// Immutable kinematic/inertial description of an N-link planar revolute
/// serial chain. Joint angles are relative; the base joint is at the world
/// origin. Construct via make() or load_chain_model(); both validate.
class ChainModel {
 public:
  static ChainModel make(std::vector<LinkParams> links, Vec2 gravity,
                         VecX torque_limit);

  /// Convenience: n equal links of the given total reach and mass, rod
  /// inertia, COM at mid-link, uniform torque limit.
  static ChainModel uniform(int n_links, double link_length, double link_mass,
                            double torque_limit, Vec2 gravity);

  int n_links() const { return static_cast<int>(links_.size()); }
  const LinkParams& link(int i) const { return links_[static_cast<size_t>(i)]; }
  const Vec2& gravity() const { return gravity_; }
  const VecX& torque_limit() const { return torque_limit_; }

  /// Total chain length (the reachable-disk radius).
  double total_length() const;

  /// Copy of this model with gravity zeroed (used by CRBA/RNEA cross checks).
  ChainModel without_gravity() const;
  /// Copy of this model with the given gravity vector.
  ChainModel with_gravity(const Vec2& g) const;

 private:
  ChainModel(std::vector<LinkParams> links, Vec2 gravity, VecX torque_limit)
      : links_(std::move(links)),
        gravity_(gravity),
        torque_limit_(std::move(torque_limit)) {}

  std::vector<LinkParams> links_;
  Vec2 gravity_;
  VecX torque_limit_;
};

/// Generalized coordinates of the arm.
struct JointState {
  VecX q;   // rad
  VecX qd;  // rad/s
};

/// Single external point force acting on the chain, applied at the
/// end-effector tip in world coordinates. absent == no external force.
struct ExternalForce {
  Vec2 force = Vec2::Zero();  // N, world frame
};

using MaybeExternalForce = std::optional<ExternalForce>;

/// Output bundle of the dynamics oracle for one state.
struct DynamicsTerms {
  MatX M;        // N x N inertia matrix, kg m^2
  VecX b;        // generalized bias force  C qd + G - tau_ext, N m
  VecX G;        // gravity torque, N m
  MatX C;        // Coriolis matrix, N m s
  VecX tau_ext;  // generalized external force, N m
};

/// Parses the model description JSON document:
///   {"links": [{"length", "mass", "com_offset", "inertia_com"?}, ...],
///    "gravity": [gx, gy], "torque_limit": [..]}
/// Rejects invariant violations with a field-identifying message.
ChainModel parse_chain_model(const std::string& json_text);
ChainModel load_chain_model(const std::string& path);
std::string chain_model_to_json(const ChainModel& model);

}  // namespace piper

#endif  // PIPER_CHAIN_MODEL_HPP_
