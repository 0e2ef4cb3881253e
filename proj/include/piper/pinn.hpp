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
// The acceleration proxy: an MLP mapping (observation, action) to predicted
// joint accelerations, trained on buffer data with a physics-residual
// regularized loss. Used as a training-time coach only; never for rollouts.

#ifndef PIPER_PINN_HPP_
#define PIPER_PINN_HPP_

#include <optional>
#include <vector>

#include "piper/autodiff.hpp"
#include "piper/buffer.hpp"
#include "piper/rng.hpp"
#include "piper/types.hpp"

namespace piper::pinn {

/// Running mean/std over input features. Observed during warmup, frozen at
/// the start of PINN training; thereafter a fixed affine map.
class Normalizer {
 public:
  explicit Normalizer(int dim)
      : mean_(VecX::Zero(dim)), m2_(VecX::Zero(dim)) {}

  void observe(const VecX& x);
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  long count() const { return count_; }

  VecX mean() const { return mean_; }
  VecX stddev() const;
  /// Coefficients of the affine map x -> scale .* x + shift.
  VecX scale() const;
  VecX shift() const;

  VecX apply(const VecX& x) const;
  ad::Mat apply_batch(const ad::Mat& X) const;

 private:
  VecX mean_, m2_;
  long count_ = 0;
  bool frozen_ = false;
};

struct PinnModel {
  ad::Network net;  // input obs_dim + n_act, output n_act
  Normalizer norm;      // over the concatenated (obs, action)
  Normalizer out_norm;  // over the acceleration labels; the network learns
                        // in label-standardized units and predictions are
                        // mapped back to rad/s^2

  static PinnModel make(int obs_dim, int n_act,
                        const std::vector<int>& hidden, Rng& rng);
  /// Hidden layout of the reference configuration (sized near the parameter
  /// budget the budget test asserts).
  static std::vector<int> reference_hidden() { return {400, 400}; }

  int obs_dim() const { return net.input_dim() - net.output_dim(); }
  int n_act() const { return net.output_dim(); }

  VecX predict_accel(const VecX& obs, const VecX& action) const;
  ad::Mat predict_accel_batch(const ad::Mat& obs, const ad::Mat& actions) const;
};

/// Tape forward pass from the raw concatenated (obs; action) columns through
/// input normalization, the network, and label de-normalization.
ad::Value forward_node(ad::Tape& t, const PinnModel& model, ad::Value raw_in,
                       ad::Gradients* sink);

/// Column-batched training data drawn from TransitionRecords.
struct PinnBatch {
  ad::Mat obs;         // obs_dim x B
  ad::Mat actions;     // N x B
  ad::Mat qdd_obs;     // N x B
  std::vector<MatX> M;
  ad::Mat b;           // N x B
  Eigen::RowVectorXd weight;  // per-sample MSE weights

  // Energy-term data; engaged when m_rate is non-empty (contact tasks).
  ad::Mat qd, gravity, tau;
  std::vector<MatX> m_rate;

  Index size() const { return obs.cols(); }
  bool has_energy_terms() const { return !m_rate.empty(); }
};

PinnBatch make_pinn_batch(const rl::ReplayBuffer& buffer,
                          const std::vector<size_t>& idx, bool energy_terms,
                          double contact_weight);

struct PinnLossReport {
  double total = 0.0;
  double mse = 0.0;
  double residual = 0.0;
  double energy = 0.0;
};

/// Weighted prediction MSE + beta * mean ||M qdd_hat + b - a||^2
/// (+ beta_e * mean energy violation when the batch carries energy terms).
/// Gradients accumulate into *sink when provided.
PinnLossReport pinn_loss(const PinnModel& model, const PinnBatch& batch,
                         double beta, double beta_e, ad::Gradients* sink);

struct PinnTrainState {
  ad::AdamState adam;
  double contact_weight = 0.5;
  double beta = 0.1;
  double beta_e = 0.1;
  int batch_size = 128;
  bool energy_terms = false;
};

/// One Adam step on a seeded buffer sample. Freezes the normalizer on first
/// use. Returns the loss report, or nullopt (documented no-op) on an empty
/// buffer.
std::optional<PinnLossReport> pinn_update(PinnModel& model,
                                          const rl::ReplayBuffer& buffer,
                                          PinnTrainState& state, Rng& rng);

}  // namespace piper::pinn

#endif  // PIPER_PINN_HPP_
