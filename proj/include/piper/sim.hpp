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
// Deterministic fixed-step simulator with three goal-conditioned planar
// environments:
//
//   reach2d  vertical plane (gravity on the arm), no object; the goal is a
//            point for the end effector.
//   push2d   horizontal plane, a disk-shaped block on a surface with Coulomb
//            friction; the goal is a point for the block, inside reach.
//   slide2d  horizontal plane, free-sliding puck; the goal lies outside the
//            reachable disk and must be reached by striking.
//
// The arm integrates with semi-implicit Euler (velocity before position).
// End-effector/object contact is a penalty spring-damper; object friction is
// an exact per-step Coulomb impulse with static hold below one step's
// friction impulse. step() is a pure transition function of (spec, state).

#ifndef PIPER_SIM_HPP_
#define PIPER_SIM_HPP_

#include <optional>
#include <string>
#include <utility>

#include "piper/chain_model.hpp"
#include "piper/types.hpp"

namespace piper::sim {

enum class EnvId { reach2d, push2d, slide2d };
enum class RewardMode { sparse, dense };

std::string to_string(EnvId id);
EnvId env_id_from_string(const std::string& s);

/// One end-effector/object contact event. `ee_object_impulse` accumulates
/// integral F dt over the contiguous event; `event_active` marks whether the
/// event is still open. friction_work_increment is the kinetic energy removed
/// from the object by friction during the step that produced this record.
struct ContactRecord {
  double normal_force = 0.0;            // N, >= 0
  Vec2 contact_point = Vec2::Zero();    // m
  Vec2 ee_object_impulse = Vec2::Zero();// N s, accumulated over the event
  VecX tau_ext;                         // N m, generalized force on the arm
  double friction_work_increment = 0.0; // J, >= 0
  bool event_active = false;
};

/// Full simulator state. The object fields are engaged iff the environment
/// has an object (push2d/slide2d).
struct WorldState {
  JointState arm;
  std::optional<Vec2> object_pos;
  std::optional<Vec2> object_vel;
  double time = 0.0;
  std::optional<ContactRecord> last_contact;
};

struct EnvSpec {
  EnvId env_id = EnvId::reach2d;
  ChainModel chain;
  double dt = 0.002;          // s
  int horizon = 400;          // steps per episode
  Vec2 goal_box_lo = Vec2::Zero();  // goal sampling box
  Vec2 goal_box_hi = Vec2::Zero();
  double object_mass = 0.1;   // kg
  double friction_mu = 0.5;
  RewardMode reward_mode = RewardMode::dense;
  double success_radius = 0.05;  // m

  // Contact and reset extras.
  double contact_stiffness = 2.0e4;  // N/m
  double contact_damping = 20.0;     // N s/m
  double v_stick = 1e-3;             // m/s, slip/stick threshold
  double object_radius = 0.06;       // m
  double g_normal = 9.81;            // m/s^2, out-of-plane gravity for friction
  double reset_joint_range = M_PI;   // rad, reach2d initial-q half-range
  double goal_offset_min = 0.1;      // m, reach2d goal distance from start ee
  double goal_offset_max = 0.5;

  /// Spec with the default desk-scale chain for the given environment:
  /// vertical-plane gravity for reach2d, horizontal plane otherwise.
  static EnvSpec defaults(EnvId id, int n_links);

  bool has_object() const { return env_id != EnvId::reach2d; }
};

struct Transition {
  VecX obs;
  VecX action;
  double reward = 0.0;
  VecX next_obs;
  bool done = false;
  std::optional<ContactRecord> contact;
  Vec2 goal = Vec2::Zero();
};

/// Deterministic initial state and goal for (spec, seed). The goal lies in
/// the goal box; reach2d/push2d goals lie inside the reachable disk, slide2d
/// goals strictly outside it.
std::pair<WorldState, Vec2> reset(const EnvSpec& spec, std::uint64_t seed);

/// Advances the world by one dt under clipped joint torques. Returns the new
/// state and the contact record for the step. Throws SimulationDiverged if
/// the state leaves the finite range.
std::pair<WorldState, ContactRecord> step(const EnvSpec& spec,
                                          const WorldState& world,
                                          const VecX& tau);

/// Observation layout:
///   reach2d:         [q, qd, ee, goal]
///   push2d/slide2d:  [q, qd, ee, goal, obj_pos, obj_vel, ee - obj]
VecX observe(const EnvSpec& spec, const WorldState& world, const Vec2& goal);
int observation_dim(const EnvSpec& spec);

double reward(const EnvSpec& spec, const WorldState& world, const Vec2& goal);

/// Euclidean distance from the relevant body (ee for reach2d, object
/// otherwise) to the goal.
double final_error(const EnvSpec& spec, const WorldState& world,
                   const Vec2& goal);

/// final_error <= success_radius (closed ball: the boundary counts).
bool success(const EnvSpec& spec, const WorldState& world, const Vec2& goal);

/// Energy stored in the contact penalty spring for the given state.
double contact_spring_energy(const EnvSpec& spec, const WorldState& world);

/// Mechanical energy of arm plus object (object KE only; the plane is
/// horizontal wherever an object exists).
double mechanical_energy(const EnvSpec& spec, const WorldState& world);

}  // namespace piper::sim

#endif  // PIPER_SIM_HPP_
