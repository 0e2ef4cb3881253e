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

#ifndef PIPER_BUFFER_HPP_
#define PIPER_BUFFER_HPP_

#include <vector>

#include "piper/rng.hpp"
#include "piper/types.hpp"

namespace piper::rl {

/// One stored environment transition together with the oracle terms needed
/// for physics-regularized training.
struct TransitionRecord {
  VecX obs;
  VecX action;
  double reward = 0.0;
  VecX next_obs;
  bool done = false;
  Vec2 goal = Vec2::Zero();

  // Oracle terms at the pre-step state.
  MatX M;
  VecX b;
  VecX tau_ext;
  VecX qdd_obs;
  VecX tau_eff;
  bool contact_flagged = false;

  // Energy bookkeeping extras (contact tasks).
  VecX qd;
  VecX gravity;
  MatX m_rate;
};

/// FIFO ring buffer with seeded uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {
    require(capacity >= 1, "ReplayBuffer: capacity must be >= 1");
  }

  void push(TransitionRecord rec) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(rec));
    } else {
      data_[write_] = std::move(rec);
    }
    write_ = (write_ + 1) % capacity_;
  }

  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  const TransitionRecord& at(size_t i) const { return data_[i]; }

  std::vector<size_t> sample_indices(size_t count, Rng& rng) const {
    std::vector<size_t> idx(count);
    for (auto& i : idx) i = rng.uniform_index(data_.size());
    return idx;
  }

 private:
  std::vector<TransitionRecord> data_;
  size_t capacity_;
  size_t write_ = 0;
};

}  // namespace piper::rl

#endif  // PIPER_BUFFER_HPP_
