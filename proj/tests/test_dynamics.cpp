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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "piper/dynamics.hpp"
#include "piper/reference.hpp"
#include "piper/rng.hpp"
#include "support/test_models.hpp"

using namespace piper;
using piper::testing::random_chain;
using piper::testing::random_vec;
using piper::testing::unit_pendulum;
using piper::testing::unit_two_link;

TEST_CASE("mass matrix: single pendulum closed form") {
  const auto model = unit_pendulum();
  for (double q1 : {0.0, 0.7, -2.1, 3.9}) {
    VecX q(1);
    q << q1;
    const MatX M = mass_matrix(model, q);
    // I + m c^2 = 1/12 + 1/4 = 1/3, independent of q.
    CHECK(M(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("mass matrix: two-link closed form at q2 = 0 and generic q") {
  const auto model = unit_two_link();
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Vector2d q2 = trial == 0 ? Eigen::Vector2d::Zero().eval()
                                    : Eigen::Vector2d(rng.uniform(-3, 3),
                                                      rng.uniform(-3, 3));
    const auto ref = reference::two_link_terms(
        model.link(0), model.link(1), model.gravity(), q2,
        Eigen::Vector2d::Zero());
    const MatX M = mass_matrix(model, VecX(q2));
    CHECK((M - ref.M).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("mass matrix: pure function, bit-identical repeat") {
  Rng rng(11);
  const auto model = random_chain(rng, 4, true);
  const VecX q = random_vec(rng, 4, -3.0, 3.0);
  const MatX a = mass_matrix(model, q);
  const MatX b = mass_matrix(model, q);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("mass matrix: symmetric and Cholesky-factorizable on random states") {
  Rng rng(13);
  for (int n : {1, 2, 3, 5}) {
    for (int trial = 0; trial < 50; ++trial) {
      const auto model = random_chain(rng, n, trial % 2 == 0);
      const VecX q = random_vec(rng, n, -3.14, 3.14);
      const MatX M = mass_matrix(model, q);
      CHECK((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      Eigen::LLT<MatX> llt(M);
      CHECK(llt.info() == Eigen::Success);
    }
  }
}

TEST_CASE("bias force: zero velocity reduces to gravity torque") {
  Rng rng(17);
  const auto model = random_chain(rng, 3, true);
  const VecX q = random_vec(rng, 3, -3.0, 3.0);
  const VecX b = bias_force(model, q, VecX::Zero(3));
  const VecX G = gravity_vector(model, q);
  CHECK((b - G).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("bias force: horizontal pendulum gravity torque") {
  const auto model = unit_pendulum();
  VecX q(1), qd(1);
  q << 0.0;
  qd << 0.0;
  const VecX b = bias_force(model, q, qd);
  CHECK(b(0) == doctest::Approx(4.905).epsilon(1e-12));  // m g c cos(0)
}

TEST_CASE("bias force: gravity-free chain at rest has zero bias") {
  Rng rng(19);
  const auto model = random_chain(rng, 4, false);
  const VecX q = random_vec(rng, 4, -3.0, 3.0);
  const VecX b = bias_force(model, q, VecX::Zero(4));
  CHECK(b.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("coriolis matrix: vanishes at zero velocity") {
  Rng rng(23);
  const auto model = random_chain(rng, 3, true);
  const VecX q = random_vec(rng, 3, -3.0, 3.0);
  const MatX C = coriolis_matrix(model, q, VecX::Zero(3));
  CHECK(C.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("coriolis matrix: C qd + G matches RNEA bias over random states") {
  Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    const auto model = random_chain(rng, 3, true);
    const VecX q = random_vec(rng, 3, -3.14, 3.14);
    const VecX qd = random_vec(rng, 3, -2.0, 2.0);
    const VecX lhs = coriolis_matrix(model, q, qd) * qd +
                     gravity_vector(model, q);
    const VecX rhs = bias_force(model, q, qd);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("coriolis matrix: Mdot - 2C is skew on random states") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto model = random_chain(rng, 3, trial % 2 == 0);
    const VecX q = random_vec(rng, 3, -3.14, 3.14);
    const VecX qd = random_vec(rng, 3, -2.0, 2.0);
    const VecX z = random_vec(rng, 3, -1.0, 1.0);
    const MatX Mdot = mass_matrix_rate_christoffel(model, q, qd);
    const MatX C = coriolis_matrix(model, q, qd);
    const double val = z.dot((Mdot - 2.0 * C) * z);
    CHECK(std::abs(val) <= 1e-5 * z.squaredNorm() * (1.0 + qd.norm()));
  }
}

TEST_CASE("coriolis matrix: two-link closed form agreement") {
  const auto model = unit_two_link();
  Rng rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Vector2d q(rng.uniform(-3, 3), rng.uniform(-3, 3));
    Eigen::Vector2d qd(rng.uniform(-2, 2), rng.uniform(-2, 2));
    const auto ref = reference::two_link_terms(model.link(0), model.link(1),
                                               model.gravity(), q, qd);
    const VecX c_qd = coriolis_matrix(model, VecX(q), VecX(qd)) * VecX(qd);
    const VecX G = gravity_vector(model, VecX(q));
    CHECK((c_qd - VecX(ref.C_qd)).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((G - VecX(ref.G)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("gravity vector: horizontal-plane model is identically zero") {
  Rng rng(41);
  const auto model = random_chain(rng, 5, false);
  for (int trial = 0; trial < 20; ++trial) {
    const VecX q = random_vec(rng, 5, -3.14, 3.14);
    CHECK(gravity_vector(model, q).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("gravity vector: vertical pendulum has zero moment arm at pi/2") {
  const auto model = unit_pendulum();
  VecX q(1);
  q << M_PI / 2.0;
  CHECK(std::abs(gravity_vector(model, q)(0)) < 1e-12);
  q << 0.0;
  CHECK(gravity_vector(model, q)(0) == doctest::Approx(4.905).epsilon(1e-12));
}

TEST_CASE("inverse dynamics: zero everything gives zero torque") {
  Rng rng(43);
  const auto model = random_chain(rng, 3, false);
  const VecX q = random_vec(rng, 3, -3.0, 3.0);
  const VecX tau =
      inverse_dynamics(model, q, VecX::Zero(3), VecX::Zero(3));
  CHECK(tau.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("inverse dynamics: forward/inverse round trip") {
  Rng rng(47);
  for (int trial = 0; trial < 50; ++trial) {
    const auto model = random_chain(rng, 4, true);
    const VecX q = random_vec(rng, 4, -3.14, 3.14);
    const VecX qd = random_vec(rng, 4, -2.0, 2.0);
    const VecX tau = random_vec(rng, 4, -10.0, 10.0);
    const VecX qdd = forward_dynamics(model, q, qd, tau);
    const VecX tau_back = inverse_dynamics(model, q, qd, qdd);
    CHECK((tau - tau_back).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("inverse dynamics: pendulum torque composes inertia and gravity") {
  const auto model = unit_pendulum();
  VecX q(1), qd(1), qdd(1);
  q << 0.0;
  qd << 0.0;
  qdd << 3.0;
  const VecX tau = inverse_dynamics(model, q, qd, qdd);
  CHECK(tau(0) == doctest::Approx(1.0 / 3.0 * 3.0 + 4.905).epsilon(1e-12));
}

TEST_CASE("forward dynamics: hanging pendulum at rest is an equilibrium") {
  const auto model = unit_pendulum();
  VecX q(1), qd(1), tau(1);
  q << -M_PI / 2.0;
  qd << 0.0;
  tau << 0.0;
  const VecX qdd = forward_dynamics(model, q, qd, tau);
  CHECK(std::abs(qdd(0)) < 1e-12);
}

TEST_CASE("forward dynamics: residual M qdd + b - tau vanishes") {
  Rng rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    const auto model = random_chain(rng, 3, true);
    const VecX q = random_vec(rng, 3, -3.14, 3.14);
    const VecX qd = random_vec(rng, 3, -2.0, 2.0);
    const VecX tau = random_vec(rng, 3, -10.0, 10.0);
    const VecX qdd = forward_dynamics(model, q, qd, tau);
    const VecX residual =
        mass_matrix(model, q) * qdd + bias_force(model, q, qd) - tau;
    CHECK(residual.cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("CRBA column equals unit-acceleration RNEA without gravity") {
  Rng rng(59);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(5));
    const auto model = random_chain(rng, n, true);
    const auto model_g0 = model.without_gravity();
    const VecX q = random_vec(rng, n, -3.14, 3.14);
    const MatX M = mass_matrix(model, q);
    for (int j = 0; j < n; ++j) {
      VecX e = VecX::Zero(n);
      e(j) = 1.0;
      const VecX col = inverse_dynamics(model_g0, q, VecX::Zero(n), e);
      CHECK((M.col(j) - col).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("forward kinematics: straight chain and right-angle bend") {
  const auto two = unit_two_link();
  VecX q(2);
  q << 0.0, 0.0;
  CHECK((forward_kinematics(two, q) - Vec2(2.0, 0.0)).norm() < 1e-14);
  q << M_PI / 2.0, 0.0;
  CHECK((forward_kinematics(two, q) - Vec2(0.0, 2.0)).norm() < 1e-12);
}

TEST_CASE("ee jacobian: single link derivative") {
  const auto model = unit_pendulum();
  VecX q(1);
  q << 0.0;
  const MatX J = ee_jacobian(model, q);
  CHECK(J(0, 0) == doctest::Approx(0.0));
  CHECK(J(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("ee jacobian: matches central differences of forward kinematics") {
  Rng rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(4));
    const auto model = random_chain(rng, n, false);
    const VecX q = random_vec(rng, n, -3.14, 3.14);
    const MatX J = ee_jacobian(model, q);
    const MatX J_fd = reference::fd_jacobian(
        [&](const VecX& x) {
          const Vec2 p = forward_kinematics(model, x);
          return VecX(p);
        },
        q, 1e-6);
    CHECK((J - J_fd).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("total energy: zero for resting gravity-free chain") {
  Rng rng(67);
  const auto model = random_chain(rng, 3, false);
  const VecX q = random_vec(rng, 3, -3.0, 3.0);
  CHECK(total_energy(model, q, VecX::Zero(3)) == doctest::Approx(0.0));
}

TEST_CASE("total energy: hanging pendulum potential") {
  const auto model = unit_pendulum();
  VecX q(1), qd(1);
  q << -M_PI / 2.0;
  qd << 0.0;
  CHECK(total_energy(model, q, qd) ==
        doctest::Approx(-1.0 * 9.81 * 0.5).epsilon(1e-12));
}

TEST_CASE("total energy: kinetic part is the M-quadratic form") {
  Rng rng(71);
  const auto model = random_chain(rng, 4, true);
  const VecX q = random_vec(rng, 4, -3.0, 3.0);
  const VecX qd = random_vec(rng, 4, -2.0, 2.0);
  const double kinetic =
      total_energy(model, q, qd) - potential_energy(model, q);
  CHECK(kinetic ==
        doctest::Approx(0.5 * qd.dot(mass_matrix(model, q) * qd))
            .epsilon(1e-12));
}

TEST_CASE("mass matrix rate: algebraic identities") {
  Rng rng(73);
  const auto model = random_chain(rng, 3, true);
  const VecX q = random_vec(rng, 3, -3.0, 3.0);
  const MatX M = mass_matrix(model, q);
  CHECK(mass_matrix_rate(M, M, 0.002).cwiseAbs().maxCoeff() == 0.0);

  MatX D = MatX::Random(3, 3);
  const double dt = 0.002;
  const MatX rate = mass_matrix_rate(M, M + dt * D, dt);
  CHECK((rate - D).cwiseAbs().maxCoeff() < 1e-10);

  CHECK_THROWS_AS(mass_matrix_rate(M, M, 0.0), ContractViolation);
  CHECK_THROWS_AS(mass_matrix_rate(M, M, -1.0), ContractViolation);
}

TEST_CASE("mass matrix rate: finite differences track the Christoffel rate") {
  // Slow trajectory: q(t) integrated at dt = 0.002 under small velocity.
  const auto model = unit_two_link();
  const double dt = 0.002;
  VecX q(2), qd(2);
  q << 0.4, -0.7;
  qd << 0.3, 0.2;
  for (int step = 0; step < 100; ++step) {
    const VecX q_next = q + dt * qd;
    const MatX fd_rate =
        mass_matrix_rate(mass_matrix(model, q), mass_matrix(model, q_next), dt);
    const MatX ref_rate = mass_matrix_rate_christoffel(model, q, qd);
    CHECK((fd_rate - ref_rate).cwiseAbs().maxCoeff() <= 1e-3);
    q = q_next;
  }
}

TEST_CASE("chain model: constructor rejects invariant violations") {
  std::vector<LinkParams> links(1);
  links[0] = {1.0, 1.0, 0.5, 1.0 / 12.0};
  CHECK_NOTHROW(ChainModel::make(links, Vec2(0, -9.81), VecX::Ones(1)));

  auto bad = links;
  bad[0].mass = 0.0;
  CHECK_THROWS_AS(ChainModel::make(bad, Vec2(0, -9.81), VecX::Ones(1)),
                  ContractViolation);
  bad = links;
  bad[0].com_offset = 1.5;
  CHECK_THROWS_AS(ChainModel::make(bad, Vec2(0, -9.81), VecX::Ones(1)),
                  ContractViolation);
  bad = links;
  bad[0].inertia_com = -0.1;
  CHECK_THROWS_AS(ChainModel::make(bad, Vec2(0, -9.81), VecX::Ones(1)),
                  ContractViolation);
  CHECK_THROWS_AS(ChainModel::make({}, Vec2(0, -9.81), VecX::Ones(0)),
                  ContractViolation);
  CHECK_THROWS_AS(ChainModel::make(links, Vec2(0, -9.81), VecX::Zero(1)),
                  ContractViolation);
  CHECK_THROWS_AS(ChainModel::make(links, Vec2(0, -9.81), VecX::Ones(2)),
                  ContractViolation);
}

TEST_CASE("chain model: JSON parsing, defaults, and field diagnostics") {
  const std::string good = R"({
    "links": [{"length": 1.0, "mass": 1.0, "com_offset": 0.5}],
    "gravity": [0.0, -9.81],
    "torque_limit": [10.0]
  })";
  const auto model = parse_chain_model(good);
  CHECK(model.n_links() == 1);
  // inertia_com omitted: uniform-rod default m l^2 / 12.
  CHECK(model.link(0).inertia_com == doctest::Approx(1.0 / 12.0));

  const std::string negative_mass = R"({
    "links": [{"length": 1.0, "mass": -1.0, "com_offset": 0.5}],
    "gravity": [0.0, -9.81],
    "torque_limit": [10.0]
  })";
  CHECK_THROWS_WITH_AS(parse_chain_model(negative_mass),
                       doctest::Contains("links[0].mass"), ContractViolation);

  const std::string unknown_key = R"({
    "links": [{"length": 1.0, "mass": 1.0, "com_offset": 0.5, "extra": 1}],
    "gravity": [0.0, -9.81],
    "torque_limit": [10.0]
  })";
  CHECK_THROWS_WITH_AS(parse_chain_model(unknown_key),
                       doctest::Contains("extra"), ContractViolation);

  const std::string bad_gravity = R"({
    "links": [{"length": 1.0, "mass": 1.0, "com_offset": 0.5}],
    "gravity": [0.0],
    "torque_limit": [10.0]
  })";
  CHECK_THROWS_WITH_AS(parse_chain_model(bad_gravity),
                       doctest::Contains("gravity"), ContractViolation);

  // Round trip through the serializer.
  const auto again = parse_chain_model(chain_model_to_json(model));
  CHECK(again.link(0).length == model.link(0).length);
  CHECK(again.link(0).inertia_com == model.link(0).inertia_com);
}

TEST_CASE("dynamics: dimension mismatches are contract violations") {
  const auto model = unit_two_link();
  VecX q3 = VecX::Zero(3);
  CHECK_THROWS_AS(mass_matrix(model, q3), ContractViolation);
  CHECK_THROWS_AS(
      forward_dynamics(model, VecX::Zero(2), VecX::Zero(2), VecX::Zero(3)),
      ContractViolation);
}

TEST_CASE("bias force: external tip force maps through the jacobian") {
  Rng rng(79);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = random_chain(rng, 3, true);
    const VecX q = random_vec(rng, 3, -3.0, 3.0);
    const VecX qd = random_vec(rng, 3, -2.0, 2.0);
    const Vec2 f(rng.uniform(-5, 5), rng.uniform(-5, 5));
    const VecX with = bias_force(model, q, qd, ExternalForce{f});
    const VecX without = bias_force(model, q, qd);
    const VecX tau_ext = ee_jacobian(model, q).transpose() * f;
    CHECK((without - with - tau_ext).cwiseAbs().maxCoeff() <= 1e-8);
  }
}
