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

#include "piper/autodiff.hpp"

#include <cmath>

#include <json.hpp>

namespace piper::ad {

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ContractViolation("activation: expected tanh|relu, got \"" + s + "\"");
}

std::string to_string(Activation a) {
  return a == Activation::tanh ? "tanh" : "relu";
}

Network Network::init(std::vector<int> sizes, Activation act, Rng& rng) {
  require(sizes.size() >= 2, "Network: need at least input and output sizes");
  for (int s : sizes) require(s >= 1, "Network: layer sizes must be >= 1");
  Network net;
  net.sizes = std::move(sizes);
  net.act = act;
  for (size_t i = 0; i + 1 < net.sizes.size(); ++i) {
    const int fan_in = net.sizes[i];
    const int fan_out = net.sizes[i + 1];
    // Glorot-uniform for tanh, He-uniform for relu.
    const double bound = act == Activation::tanh
                             ? std::sqrt(6.0 / (fan_in + fan_out))
                             : std::sqrt(6.0 / fan_in);
    Mat W(fan_out, fan_in);
    for (Index r = 0; r < W.rows(); ++r)
      for (Index c = 0; c < W.cols(); ++c) W(r, c) = rng.uniform(-bound, bound);
    net.W.push_back(std::move(W));
    net.b.push_back(VecX::Zero(fan_out));
  }
  return net;
}

long Network::param_count() const {
  long count = 0;
  for (size_t i = 0; i < W.size(); ++i) count += W[i].size() + b[i].size();
  return count;
}

VecX Network::forward(const VecX& x) const { return forward_batch(x).col(0); }

Mat Network::forward_batch(const Mat& X) const {
  require(X.rows() == input_dim(), "Network::forward: input dim mismatch");
  Mat h = X;
  for (size_t i = 0; i < W.size(); ++i) {
    h = (W[i] * h).colwise() + b[i];
    if (i + 1 < W.size()) {
      if (act == Activation::tanh)
        h = h.array().tanh();
      else
        h = h.cwiseMax(0.0);
    }
  }
  return h;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (size_t i = 0; i < net.W.size(); ++i) {
    g.dW.push_back(Mat::Zero(net.W[i].rows(), net.W[i].cols()));
    g.db.push_back(Mat::Zero(net.b[i].size(), 1));
  }
  return g;
}

void Gradients::setZero() {
  for (auto& m : dW) m.setZero();
  for (auto& m : db) m.setZero();
}

bool Gradients::allFinite() const {
  for (const auto& m : dW)
    if (!m.allFinite()) return false;
  for (const auto& m : db)
    if (!m.allFinite()) return false;
  return true;
}

VecX flatten_params(const Network& net) {
  VecX theta(net.param_count());
  Index at = 0;
  for (size_t i = 0; i < net.W.size(); ++i) {
    theta.segment(at, net.W[i].size()) =
        Eigen::Map<const VecX>(net.W[i].data(), net.W[i].size());
    at += net.W[i].size();
    theta.segment(at, net.b[i].size()) = net.b[i];
    at += net.b[i].size();
  }
  return theta;
}

void unflatten_params(Network& net, const VecX& theta) {
  require(theta.size() == net.param_count(), "unflatten_params: size mismatch");
  Index at = 0;
  for (size_t i = 0; i < net.W.size(); ++i) {
    Eigen::Map<VecX>(net.W[i].data(), net.W[i].size()) =
        theta.segment(at, net.W[i].size());
    at += net.W[i].size();
    net.b[i] = theta.segment(at, net.b[i].size());
    at += net.b[i].size();
  }
}

VecX flatten_grads(const Gradients& g) {
  Index total = 0;
  for (size_t i = 0; i < g.dW.size(); ++i)
    total += g.dW[i].size() + g.db[i].size();
  VecX out(total);
  Index at = 0;
  for (size_t i = 0; i < g.dW.size(); ++i) {
    out.segment(at, g.dW[i].size()) =
        Eigen::Map<const VecX>(g.dW[i].data(), g.dW[i].size());
    at += g.dW[i].size();
    out.segment(at, g.db[i].size()) =
        Eigen::Map<const VecX>(g.db[i].data(), g.db[i].size());
    at += g.db[i].size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Value Tape::emit(Mat value, bool needs_grad) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  nodes_.push_back(std::move(node));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

void Tape::set_backprop(Value v, std::function<void(Tape&)> backprop) {
  nodes_[v.idx].backprop = std::move(backprop);
}

Value Tape::constant(Mat m) { return emit(std::move(m), false); }

Value Tape::input(Mat m) { return emit(std::move(m), true); }

Value Tape::param(const Mat& m, Mat* sink) {
  Value v = emit(m, sink != nullptr);
  nodes_[v.idx].sink = sink;
  return v;
}

Mat& Tape::grad_buf(int idx) {
  Node& node = nodes_[idx];
  if (node.grad.size() == 0)
    node.grad = Mat::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::backward(Value out) {
  require(nodes_[out.idx].value.size() == 1,
          "backward: default seed requires a scalar output");
  backward(out, Mat::Ones(1, 1));
}

void Tape::backward(Value out, const Mat& cotangent) {
  require(cotangent.rows() == nodes_[out.idx].value.rows() &&
              cotangent.cols() == nodes_[out.idx].value.cols(),
          "backward: cotangent shape mismatch");
  grad_buf(out.idx) = cotangent;
  for (int i = out.idx; i >= 0; --i) {
    Node& node = nodes_[i];
    if (!node.needs_grad || node.grad.size() == 0) continue;
    if (node.backprop) node.backprop(*this);
    if (node.sink) *node.sink += node.grad;
  }
}

namespace {

void accum(Tape& t, Value v, const Mat& g) {
  if (t.needs_grad(v)) t.grad_buf(v.idx) += g;
}

bool ng(const Tape& t, Value a) { return t.needs_grad(a); }
bool ng(const Tape& t, Value a, Value b) {
  return t.needs_grad(a) || t.needs_grad(b);
}

}  // namespace

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

Value add(Tape& t, Value a, Value b) {
  Value out = t.emit(t.val(a) + t.val(b), ng(t, a, b));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, b](Tape& t) {
      accum(t, a, t.grad(out));
      accum(t, b, t.grad(out));
    });
  return out;
}

Value sub(Tape& t, Value a, Value b) {
  Value out = t.emit(t.val(a) - t.val(b), ng(t, a, b));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, b](Tape& t) {
      accum(t, a, t.grad(out));
      accum(t, b, -t.grad(out));
    });
  return out;
}

Value neg(Tape& t, Value a) { return scale(t, a, -1.0); }

Value hadamard(Tape& t, Value a, Value b) {
  Value out = t.emit(t.val(a).cwiseProduct(t.val(b)), ng(t, a, b));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, b](Tape& t) {
      accum(t, a, t.grad(out).cwiseProduct(t.val(b)));
      accum(t, b, t.grad(out).cwiseProduct(t.val(a)));
    });
  return out;
}

Value scale(Tape& t, Value a, double s) {
  Value out = t.emit(s * t.val(a), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out,
                   [out, a, s](Tape& t) { accum(t, a, s * t.grad(out)); });
  return out;
}

Value add_scalar(Tape& t, Value a, double c) {
  Value out = t.emit((t.val(a).array() + c).matrix(), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a](Tape& t) { accum(t, a, t.grad(out)); });
  return out;
}

Value matmul(Tape& t, Value a, Value b) {
  Value out = t.emit(t.val(a) * t.val(b), ng(t, a, b));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, b](Tape& t) {
      accum(t, a, t.grad(out) * t.val(b).transpose());
      accum(t, b, t.val(a).transpose() * t.grad(out));
    });
  return out;
}

Value add_colvec(Tape& t, Value a, Value bias) {
  require(t.val(bias).cols() == 1 && t.val(bias).rows() == t.val(a).rows(),
          "add_colvec: bias must be (rows x 1)");
  Value out =
      t.emit(t.val(a).colwise() + VecX(t.val(bias).col(0)), ng(t, a, bias));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, bias](Tape& t) {
      accum(t, a, t.grad(out));
      accum(t, bias, t.grad(out).rowwise().sum());
    });
  return out;
}

Value tanh_(Tape& t, Value a) {
  Value out = t.emit(t.val(a).array().tanh().matrix(), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a](Tape& t) {
      accum(t, a,
            t.grad(out).cwiseProduct(
                (1.0 - t.val(out).array().square()).matrix()));
    });
  return out;
}

Value relu_(Tape& t, Value a) {
  Value out = t.emit(t.val(a).cwiseMax(0.0), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a](Tape& t) {
      const Mat mask =
          (t.val(a).array() > 0.0).cast<double>().matrix();
      accum(t, a, t.grad(out).cwiseProduct(mask));
    });
  return out;
}

Value exp_(Tape& t, Value a) {
  Value out = t.emit(t.val(a).array().exp().matrix(), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a](Tape& t) {
      accum(t, a, t.grad(out).cwiseProduct(t.val(out)));
    });
  return out;
}

Value log_(Tape& t, Value a) {
  Value out = t.emit(t.val(a).array().log().matrix(), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a](Tape& t) {
      accum(t, a, t.grad(out).cwiseQuotient(t.val(a)));
    });
  return out;
}

Value softplus(Tape& t, Value a) {
  // log(1 + e^x), computed stably as max(x,0) + log1p(e^{-|x|}).
  Mat v = t.val(a).unaryExpr([](double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  });
  Value out = t.emit(std::move(v), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a](Tape& t) {
      const Mat sig = t.val(a).unaryExpr(
          [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
      accum(t, a, t.grad(out).cwiseProduct(sig));
    });
  return out;
}

Value square(Tape& t, Value a) {
  Value out = t.emit(t.val(a).array().square().matrix(), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a](Tape& t) {
      accum(t, a, 2.0 * t.grad(out).cwiseProduct(t.val(a)));
    });
  return out;
}

Value abs_(Tape& t, Value a) {
  Value out = t.emit(t.val(a).cwiseAbs(), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a](Tape& t) {
      const Mat sign = t.val(a).unaryExpr(
          [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
      accum(t, a, t.grad(out).cwiseProduct(sign));
    });
  return out;
}

Value sum(Tape& t, Value a) {
  Mat v(1, 1);
  v(0, 0) = t.val(a).sum();
  Value out = t.emit(std::move(v), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a](Tape& t) {
      accum(t, a,
            Mat::Constant(t.val(a).rows(), t.val(a).cols(),
                          t.grad(out)(0, 0)));
    });
  return out;
}

Value mean_all(Tape& t, Value a) {
  return scale(t, sum(t, a), 1.0 / static_cast<double>(t.val(a).size()));
}

Value colwise_sum(Tape& t, Value a) {
  Value out = t.emit(t.val(a).colwise().sum(), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a](Tape& t) {
      accum(t, a, Mat::Ones(t.val(a).rows(), 1) * t.grad(out));
    });
  return out;
}

Value transpose(Tape& t, Value a) {
  Value out = t.emit(t.val(a).transpose(), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a](Tape& t) {
      accum(t, a, t.grad(out).transpose());
    });
  return out;
}

Value slice_rows(Tape& t, Value a, int row0, int nrows) {
  require(row0 >= 0 && row0 + nrows <= t.val(a).rows(),
          "slice_rows: range out of bounds");
  Value out = t.emit(t.val(a).middleRows(row0, nrows), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, row0, nrows](Tape& t) {
      if (t.needs_grad(a))
        t.grad_buf(a.idx).middleRows(row0, nrows) += t.grad(out);
    });
  return out;
}

Value concat_rows(Tape& t, Value a, Value b) {
  require(t.val(a).cols() == t.val(b).cols(),
          "concat_rows: column count mismatch");
  Mat v(t.val(a).rows() + t.val(b).rows(), t.val(a).cols());
  v.topRows(t.val(a).rows()) = t.val(a);
  v.bottomRows(t.val(b).rows()) = t.val(b);
  Value out = t.emit(std::move(v), ng(t, a, b));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, b](Tape& t) {
      const Index ra = t.val(a).rows();
      const Index rb = t.val(b).rows();
      accum(t, a, t.grad(out).topRows(ra));
      accum(t, b, t.grad(out).bottomRows(rb));
    });
  return out;
}

Value cwise_min(Tape& t, Value a, Value b) {
  Value out = t.emit(t.val(a).cwiseMin(t.val(b)), ng(t, a, b));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, b](Tape& t) {
      // Ties route to a.
      const Mat take_a =
          (t.val(a).array() <= t.val(b).array()).cast<double>().matrix();
      accum(t, a, t.grad(out).cwiseProduct(take_a));
      accum(t, b,
            t.grad(out).cwiseProduct((1.0 - take_a.array()).matrix()));
    });
  return out;
}

Value cwise_max(Tape& t, Value a, Value b) {
  Value out = t.emit(t.val(a).cwiseMax(t.val(b)), ng(t, a, b));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, b](Tape& t) {
      const Mat take_a =
          (t.val(a).array() >= t.val(b).array()).cast<double>().matrix();
      accum(t, a, t.grad(out).cwiseProduct(take_a));
      accum(t, b,
            t.grad(out).cwiseProduct((1.0 - take_a.array()).matrix()));
    });
  return out;
}

Value clamp(Tape& t, Value a, double lo, double hi) {
  Value out = t.emit(t.val(a).cwiseMax(lo).cwiseMin(hi), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, lo, hi](Tape& t) {
      const Mat inside = ((t.val(a).array() >= lo) && (t.val(a).array() <= hi))
                             .cast<double>()
                             .matrix();
      accum(t, a, t.grad(out).cwiseProduct(inside));
    });
  return out;
}

Value batch_matvec(Tape& t, std::vector<Mat> Ms, Value a) {
  const Mat& X = t.val(a);
  require(static_cast<Index>(Ms.size()) == X.cols(),
          "batch_matvec: one matrix per column required");
  Mat v(Ms.empty() ? 0 : Ms[0].rows(), X.cols());
  for (Index j = 0; j < X.cols(); ++j) {
    require(Ms[static_cast<size_t>(j)].cols() == X.rows(),
            "batch_matvec: matrix/vector dim mismatch");
    v.col(j) = Ms[static_cast<size_t>(j)] * X.col(j);
  }
  Value out = t.emit(std::move(v), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, Ms = std::move(Ms)](Tape& t) {
      Mat& ga = t.grad_buf(a.idx);
      const Mat& go = t.grad(out);
      for (Index j = 0; j < go.cols(); ++j)
        ga.col(j) += Ms[static_cast<size_t>(j)].transpose() * go.col(j);
    });
  return out;
}

Value affine_rows(Tape& t, Value a, const VecX& s, const VecX& c) {
  require(s.size() == t.val(a).rows() && c.size() == t.val(a).rows(),
          "affine_rows: coefficient size mismatch");
  Mat v = (s.asDiagonal() * t.val(a)).colwise() + c;
  Value out = t.emit(std::move(v), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, s](Tape& t) {
      accum(t, a, s.asDiagonal() * t.grad(out));
    });
  return out;
}

Value scale_cols(Tape& t, Value a, const Eigen::RowVectorXd& w) {
  require(w.size() == t.val(a).cols(), "scale_cols: weight size mismatch");
  Mat v = t.val(a) * w.asDiagonal();
  Value out = t.emit(std::move(v), ng(t, a));
  if (t.needs_grad(out))
    t.set_backprop(out, [out, a, w](Tape& t) {
      accum(t, a, t.grad(out) * w.asDiagonal());
    });
  return out;
}

Value mlp(Tape& t, const Network& net, Value in, Gradients* sink) {
  require(t.val(in).rows() == net.input_dim(), "mlp: input dim mismatch");
  Value h = in;
  for (int i = 0; i < net.layer_count(); ++i) {
    Value W = t.param(net.W[static_cast<size_t>(i)],
                      sink ? &sink->dW[static_cast<size_t>(i)] : nullptr);
    Value bias = t.param(net.b[static_cast<size_t>(i)],
                         sink ? &sink->db[static_cast<size_t>(i)] : nullptr);
    h = add_colvec(t, matmul(t, W, h), bias);
    if (i + 1 < net.layer_count())
      h = net.act == Activation::tanh ? tanh_(t, h) : relu_(t, h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState AdamState::make(const Network& net, double lr) {
  AdamState s;
  s.lr = lr;
  for (size_t i = 0; i < net.W.size(); ++i) {
    s.mW.push_back(Mat::Zero(net.W[i].rows(), net.W[i].cols()));
    s.vW.push_back(Mat::Zero(net.W[i].rows(), net.W[i].cols()));
    s.mb.push_back(Mat::Zero(net.b[i].size(), 1));
    s.vb.push_back(Mat::Zero(net.b[i].size(), 1));
  }
  return s;
}

namespace {

void adam_update(Mat& p, const Mat& g, Mat& m, Mat& v, const AdamState& s,
                 double corr1, double corr2) {
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseProduct(g);
  const Mat m_hat = m / corr1;
  const Mat v_hat = v / corr2;
  p -= (s.lr * m_hat.array() / (v_hat.array().sqrt() + s.eps)).matrix();
}

}  // namespace

void adam_step(Network& net, const Gradients& g, AdamState& state) {
  require(g.dW.size() == net.W.size(), "adam_step: gradient shape mismatch");
  state.step += 1;
  const double corr1 = 1.0 - std::pow(state.beta1, state.step);
  const double corr2 = 1.0 - std::pow(state.beta2, state.step);
  for (size_t i = 0; i < net.W.size(); ++i) {
    adam_update(net.W[i], g.dW[i], state.mW[i], state.vW[i], state, corr1,
                corr2);
    Mat b = net.b[i];
    adam_update(b, g.db[i], state.mb[i], state.vb[i], state, corr1, corr2);
    net.b[i] = b.col(0);
  }
}

double grad_check(Network& net,
                  const std::function<double(const Network&, Gradients*)>& loss,
                  Rng& rng, int n_directions, double h) {
  Gradients g = Gradients::zeros_like(net);
  loss(net, &g);
  const VecX grad_flat = flatten_grads(g);
  const VecX theta0 = flatten_params(net);

  double worst = 0.0;
  for (int d = 0; d < n_directions; ++d) {
    VecX dir(theta0.size());
    for (Index i = 0; i < dir.size(); ++i) dir(i) = rng.normal();
    dir.normalize();

    unflatten_params(net, theta0 + h * dir);
    const double up = loss(net, nullptr);
    unflatten_params(net, theta0 - h * dir);
    const double down = loss(net, nullptr);
    unflatten_params(net, theta0);

    const double fd = (up - down) / (2.0 * h);
    const double analytic = grad_flat.dot(dir);
    const double rel = std::abs(fd - analytic) /
                       std::max({std::abs(fd), std::abs(analytic), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

std::string network_to_json(const Network& net) {
  nlohmann::json doc;
  doc["format"] = "piper2d-network";
  doc["version"] = 1;
  doc["sizes"] = net.sizes;
  doc["activation"] = to_string(net.act);
  doc["weights"] = nlohmann::json::array();
  doc["biases"] = nlohmann::json::array();
  for (size_t i = 0; i < net.W.size(); ++i) {
    std::vector<double> w(net.W[i].data(), net.W[i].data() + net.W[i].size());
    std::vector<double> b(net.b[i].data(), net.b[i].data() + net.b[i].size());
    doc["weights"].push_back(w);
    doc["biases"].push_back(b);
  }
  return doc.dump();
}

Network network_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractViolation(std::string("network checkpoint: ") + e.what());
  }
  require(doc.value("format", "") == "piper2d-network",
          "network checkpoint: wrong format tag");
  require(doc.value("version", 0) == 1,
          "network checkpoint: unsupported version");
  Network net;
  net.sizes = doc.at("sizes").get<std::vector<int>>();
  net.act = activation_from_string(doc.at("activation").get<std::string>());
  const auto& jw = doc.at("weights");
  const auto& jb = doc.at("biases");
  require(jw.size() + 1 == net.sizes.size() && jb.size() == jw.size(),
          "network checkpoint: layer count mismatch");
  for (size_t i = 0; i + 1 < net.sizes.size(); ++i) {
    const int rows = net.sizes[i + 1];
    const int cols = net.sizes[i];
    const auto w = jw[i].get<std::vector<double>>();
    const auto b = jb[i].get<std::vector<double>>();
    require(static_cast<int>(w.size()) == rows * cols &&
                static_cast<int>(b.size()) == rows,
            "network checkpoint: parameter size mismatch");
    net.W.push_back(Eigen::Map<const Mat>(w.data(), rows, cols));
    net.b.push_back(Eigen::Map<const VecX>(b.data(), rows));
  }
  return net;
}

}  // namespace piper::ad
