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
// Built-in verification suites: dynamics identities against independent
// closed-form references, integrator energy behavior, friction physics, and
// finite-difference agreement of every differentiable loss. Exposed through
// the dyncheck/gradcheck CLI subcommands; every tolerance is pinned here.

#ifndef PIPER_CHECKS_HPP_
#define PIPER_CHECKS_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace piper::checks {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Mass-matrix symmetry/SPD, CRBA vs unit-acceleration RNEA, two-link
/// closed form, Mdot - 2C skew symmetry, RNEA bias vs C qd + G. 1000 random
/// states over 1/2/3/5-link chains.
std::vector<CheckResult> dynamics_checks(std::uint64_t seed = 42);

/// Torque-free pendulum energy drift at dt = 0.002 over 5 s, and first-order
/// convergence when dt halves.
std::vector<CheckResult> energy_checks();

/// Coulomb stopping distance and contact-event impulse bookkeeping.
std::vector<CheckResult> friction_checks();

/// Central-difference agreement (1e-4 relative) for every loss: the PINN
/// loss, the actor physics penalty through M(q) Phi(s, pi(s)), the energy
/// residual, and the task constraint losses.
std::vector<CheckResult> gradient_checks(std::uint64_t seed = 42);

/// Physics residual zero case over 1000 random states.
std::vector<CheckResult> residual_checks(std::uint64_t seed = 42);

bool all_pass(const std::vector<CheckResult>& results);
void print_report(std::ostream& os, const std::vector<CheckResult>& results);

}  // namespace piper::checks

#endif  // PIPER_CHECKS_HPP_
