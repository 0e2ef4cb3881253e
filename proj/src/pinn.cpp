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

#include "piper/pinn.hpp"

#include <cmath>

#include "piper/loss_graphs.hpp"

namespace piper::pinn {

void Normalizer::observe(const VecX& x) {
  require(!frozen_, "Normalizer: observe after freeze");
  require(x.size() == mean_.size(), "Normalizer: dimension mismatch");
  count_ += 1;
  const VecX delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta.cwiseProduct(x - mean_);
}

VecX Normalizer::stddev() const {
  if (count_ < 2) return VecX::Ones(mean_.size());
  const VecX var = m2_ / static_cast<double>(count_);
  return var.cwiseMax(1e-12).cwiseSqrt().cwiseMax(1e-6);
}

VecX Normalizer::scale() const { return stddev().cwiseInverse(); }

VecX Normalizer::shift() const {
  return -mean_.cwiseQuotient(stddev());
}

VecX Normalizer::apply(const VecX& x) const {
  return scale().cwiseProduct(x) + shift();
}

ad::Mat Normalizer::apply_batch(const ad::Mat& X) const {
  return (scale().asDiagonal() * X).colwise() + shift();
}

PinnModel PinnModel::make(int obs_dim, int n_act,
                          const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes;
  sizes.push_back(obs_dim + n_act);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(n_act);
  return PinnModel{ad::Network::init(sizes, ad::Activation::tanh, rng),
                   Normalizer(obs_dim + n_act), Normalizer(n_act)};
}

VecX PinnModel::predict_accel(const VecX& obs, const VecX& action) const {
  require(obs.size() == obs_dim() && action.size() == n_act(),
          "predict_accel: dimension mismatch");
  VecX x(obs.size() + action.size());
  x << obs, action;
  return out_norm.stddev().cwiseProduct(net.forward(norm.apply(x))) +
         out_norm.mean();
}

ad::Mat PinnModel::predict_accel_batch(const ad::Mat& obs,
                                       const ad::Mat& actions) const {
  ad::Mat X(obs.rows() + actions.rows(), obs.cols());
  X.topRows(obs.rows()) = obs;
  X.bottomRows(actions.rows()) = actions;
  return (out_norm.stddev().asDiagonal() *
          net.forward_batch(norm.apply_batch(X)))
             .colwise() +
         out_norm.mean();
}

ad::Value forward_node(ad::Tape& t, const PinnModel& model, ad::Value raw_in,
                       ad::Gradients* sink) {
  ad::Value normalized =
      ad::affine_rows(t, raw_in, model.norm.scale(), model.norm.shift());
  ad::Value out = ad::mlp(t, model.net, normalized, sink);
  return ad::affine_rows(t, out, model.out_norm.stddev(),
                         model.out_norm.mean());
}

PinnBatch make_pinn_batch(const rl::ReplayBuffer& buffer,
                          const std::vector<size_t>& idx, bool energy_terms,
                          double contact_weight) {
  require(!idx.empty(), "make_pinn_batch: empty index set");
  const auto& first = buffer.at(idx[0]);
  const Index obs_dim = first.obs.size();
  const Index n = first.action.size();
  const Index batch = static_cast<Index>(idx.size());

  PinnBatch out;
  out.obs.resize(obs_dim, batch);
  out.actions.resize(n, batch);
  out.qdd_obs.resize(n, batch);
  out.b.resize(n, batch);
  out.weight.resize(batch);
  out.M.reserve(static_cast<size_t>(batch));
  if (energy_terms) {
    out.qd.resize(n, batch);
    out.gravity.resize(n, batch);
    out.tau.resize(n, batch);
    out.m_rate.reserve(static_cast<size_t>(batch));
  }
  for (Index j = 0; j < batch; ++j) {
    const auto& rec = buffer.at(idx[static_cast<size_t>(j)]);
    out.obs.col(j) = rec.obs;
    out.actions.col(j) = rec.action;
    out.qdd_obs.col(j) = rec.qdd_obs;
    out.b.col(j) = rec.b;
    out.M.push_back(rec.M);
    out.weight(j) = rec.contact_flagged ? contact_weight : 1.0;
    if (energy_terms) {
      out.qd.col(j) = rec.qd;
      out.gravity.col(j) = rec.gravity;
      out.tau.col(j) = rec.action;
      out.m_rate.push_back(rec.m_rate);
    }
  }
  return out;
}

PinnLossReport pinn_loss(const PinnModel& model, const PinnBatch& batch,
                         double beta, double beta_e, ad::Gradients* sink) {
  require(beta >= 0.0 && beta_e >= 0.0, "pinn_loss: beta must be >= 0");
  const Index B = batch.size();
  require(B > 0, "pinn_loss: empty batch");

  ad::Tape t;
  ad::Mat X(batch.obs.rows() + batch.actions.rows(), B);
  X.topRows(batch.obs.rows()) = batch.obs;
  X.bottomRows(batch.actions.rows()) = batch.actions;
  ad::Value qdd_hat = forward_node(t, model, t.constant(X), sink);

  // Weighted prediction MSE.
  ad::Value diff = ad::sub(t, qdd_hat, t.constant(batch.qdd_obs));
  ad::Value sq = ad::scale_cols(t, ad::square(t, diff), batch.weight);
  ad::Value mse = ad::scale(t, ad::sum(t, sq), 1.0 / static_cast<double>(B));

  ad::Value total = mse;
  ad::Value residual_term{-1};
  if (beta > 0.0) {
    ad::Value r = lg::residual_node(t, batch.M, batch.b, qdd_hat,
                                    t.constant(batch.actions));
    residual_term = ad::scale(t, lg::mean_sq_colnorm(t, r), beta);
    total = ad::add(t, total, residual_term);
  }
  ad::Value energy_term{-1};
  if (beta_e > 0.0 && batch.has_energy_terms()) {
    ad::Value e_row = lg::energy_residual_node(
        t, batch.qd, batch.M, batch.m_rate, batch.gravity, qdd_hat,
        t.constant(batch.tau));
    energy_term = ad::scale(t, ad::sum(t, e_row),
                            beta_e / static_cast<double>(B));
    total = ad::add(t, total, energy_term);
  }
  t.backward(total);

  PinnLossReport report;
  report.total = t.scalar(total);
  report.mse = t.scalar(mse);
  report.residual = residual_term.idx >= 0 ? t.scalar(residual_term) : 0.0;
  report.energy = energy_term.idx >= 0 ? t.scalar(energy_term) : 0.0;
  return report;
}

std::optional<PinnLossReport> pinn_update(PinnModel& model,
                                          const rl::ReplayBuffer& buffer,
                                          PinnTrainState& state, Rng& rng) {
  if (buffer.empty()) return std::nullopt;
  if (!model.norm.frozen()) model.norm.freeze();
  if (!model.out_norm.frozen()) model.out_norm.freeze();
  const size_t batch =
      std::min<size_t>(static_cast<size_t>(state.batch_size), buffer.size());
  const auto idx = buffer.sample_indices(batch, rng);
  const PinnBatch data =
      make_pinn_batch(buffer, idx, state.energy_terms, state.contact_weight);
  ad::Gradients g = ad::Gradients::zeros_like(model.net);
  const PinnLossReport report =
      pinn_loss(model, data, state.beta, state.beta_e, &g);
  if (!std::isfinite(report.total) || !g.allFinite())
    throw TrainingDiverged("pinn_update: non-finite loss or gradients");
  ad::adam_step(model.net, g, state.adam);
  return report;
}

}  // namespace piper::pinn
