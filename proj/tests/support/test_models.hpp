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

#ifndef PIPER_TESTS_SUPPORT_TEST_MODELS_HPP_
#define PIPER_TESTS_SUPPORT_TEST_MODELS_HPP_

#include "piper/chain_model.hpp"
#include "piper/rng.hpp"

namespace piper::testing {

inline ChainModel random_chain(Rng& rng, int n_links, bool vertical_plane) {
  std::vector<LinkParams> links(static_cast<size_t>(n_links));
  for (auto& p : links) {
    p.length = rng.uniform(0.3, 1.2);
    p.mass = rng.uniform(0.2, 2.0);
    p.com_offset = p.length * rng.uniform(0.2, 0.8);
    p.inertia_com =
        p.mass * p.length * p.length / 12.0 * rng.uniform(0.5, 1.5);
  }
  VecX tl = VecX::Constant(n_links, 50.0);
  const Vec2 g = vertical_plane ? Vec2(0.0, -9.81) : Vec2(0.0, 0.0);
  return ChainModel::make(std::move(links), g, std::move(tl));
}

inline VecX random_vec(Rng& rng, int n, double lo, double hi) {
  VecX v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

/// The single pendulum used throughout: m=1, l=1, c=0.5, I=1/12, so the
/// closed-form inertia is 1/3 and the hanging-rest energy is -4.905 J.
inline ChainModel unit_pendulum(Vec2 gravity = Vec2(0.0, -9.81)) {
  return ChainModel::uniform(1, 1.0, 1.0, 50.0, gravity);
}

/// The two-link chain with unit links, COM at mid-link, rod inertia.
inline ChainModel unit_two_link(Vec2 gravity = Vec2(0.0, -9.81)) {
  return ChainModel::uniform(2, 1.0, 1.0, 50.0, gravity);
}

}  // namespace piper::testing

#endif  // PIPER_TESTS_SUPPORT_TEST_MODELS_HPP_
