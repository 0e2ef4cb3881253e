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
// Minimal reverse-mode automatic differentiation over dense matrices.
// A Tape records matrix-valued nodes; columns are batch samples. Leaves are
// constants, differentiable inputs (their cotangents are retrievable after
// backward -- needed wherever a gradient with respect to a network INPUT is
// part of the objective), or network parameters bound to a Gradients sink.
// Everything is 64-bit.

#ifndef PIPER_AUTODIFF_HPP_
#define PIPER_AUTODIFF_HPP_

#include <functional>
#include <string>
#include <vector>

#include "piper/rng.hpp"
#include "piper/types.hpp"

namespace piper::ad {

using Mat = Eigen::MatrixXd;

struct Value {
  int idx = -1;
};

enum class Activation { tanh, relu };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

/// Fully connected network: sizes = {in, hidden..., out}; the last layer is
/// linear. Weights use fan-scaled uniform init (Glorot for tanh, He for
/// relu), seeded.
struct Network {
  std::vector<Mat> W;   // W[i]: sizes[i+1] x sizes[i]
  std::vector<VecX> b;  // b[i]: sizes[i+1]
  std::vector<int> sizes;
  Activation act = Activation::tanh;

  static Network init(std::vector<int> sizes, Activation act, Rng& rng);

  int layer_count() const { return static_cast<int>(W.size()); }
  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  long param_count() const;

  /// Plain forward evaluation without a tape.
  VecX forward(const VecX& x) const;
  Mat forward_batch(const Mat& X) const;
};

/// Parameter-shaped gradient accumulator for one Network.
struct Gradients {
  std::vector<Mat> dW;
  std::vector<Mat> db;

  static Gradients zeros_like(const Network& net);
  void setZero();
  bool allFinite() const;
};

VecX flatten_params(const Network& net);
void unflatten_params(Network& net, const VecX& theta);
VecX flatten_grads(const Gradients& g);

class Tape {
 public:
  Tape() { nodes_.reserve(256); }

  Value constant(Mat m);
  /// Differentiable leaf; grad() is its cotangent after backward().
  Value input(Mat m);
  /// Parameter leaf. If sink is non-null the parameter is trainable and its
  /// gradient accumulates into *sink after backward; a null sink freezes it.
  Value param(const Mat& m, Mat* sink);

  const Mat& val(Value v) const { return nodes_[v.idx].value; }
  const Mat& grad(Value v) const { return nodes_[v.idx].grad; }
  double scalar(Value v) const { return nodes_[v.idx].value(0, 0); }

  /// Reverse pass from a scalar node (seeds with 1).
  void backward(Value out);
  void backward(Value out, const Mat& cotangent);

  size_t size() const { return nodes_.size(); }

  // -- internals used by the op free functions --
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    Mat* sink = nullptr;
    std::function<void(Tape&)> backprop;
  };
  Value emit(Mat value, bool needs_grad);
  void set_backprop(Value v, std::function<void(Tape&)> backprop);
  Mat& grad_buf(int idx);
  bool needs_grad(Value v) const { return nodes_[v.idx].needs_grad; }

 private:
  std::vector<Node> nodes_;
};

// Elementwise and structural ops. All return a new node.
Value add(Tape& t, Value a, Value b);
Value sub(Tape& t, Value a, Value b);
Value neg(Tape& t, Value a);
Value hadamard(Tape& t, Value a, Value b);
Value scale(Tape& t, Value a, double s);
Value add_scalar(Tape& t, Value a, double c);
Value matmul(Tape& t, Value a, Value b);
/// a + bias broadcast over columns; bias must be (rows x 1).
Value add_colvec(Tape& t, Value a, Value bias);
Value tanh_(Tape& t, Value a);
Value relu_(Tape& t, Value a);
Value exp_(Tape& t, Value a);
Value log_(Tape& t, Value a);
Value softplus(Tape& t, Value a);
Value square(Tape& t, Value a);
Value abs_(Tape& t, Value a);
Value sum(Tape& t, Value a);       // 1x1
Value mean_all(Tape& t, Value a);  // 1x1
Value colwise_sum(Tape& t, Value a);  // 1 x cols, sum over rows
Value transpose(Tape& t, Value a);
Value slice_rows(Tape& t, Value a, int row0, int nrows);
Value concat_rows(Tape& t, Value a, Value b);
Value cwise_min(Tape& t, Value a, Value b);
Value cwise_max(Tape& t, Value a, Value b);
Value clamp(Tape& t, Value a, double lo, double hi);
/// Per-column matrix product: out.col(i) = Ms[i] * a.col(i).
Value batch_matvec(Tape& t, std::vector<Mat> Ms, Value a);
/// Per-row affine map with constant coefficients: out(i,j) = s(i)*a(i,j)+c(i).
Value affine_rows(Tape& t, Value a, const VecX& s, const VecX& c);
/// Per-column constant weights: out.col(j) = w(j) * a.col(j).
Value scale_cols(Tape& t, Value a, const Eigen::RowVectorXd& w);

/// Builds the network's forward pass on the tape. sink as in Tape::param.
Value mlp(Tape& t, const Network& net, Value in, Gradients* sink);

/// Adam optimizer state for one Network.
struct AdamState {
  std::vector<Mat> mW, vW;
  std::vector<Mat> mb, vb;
  long step = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState make(const Network& net, double lr);
};

/// One Adam update in place. Gradient shapes must match the network.
void adam_step(Network& net, const Gradients& g, AdamState& state);

/// Max relative error between the analytic parameter gradient of `loss` and
/// central finite differences along `n_directions` random unit directions.
/// `loss` must evaluate the objective and (when sink != nullptr) accumulate
/// its gradients; it is called repeatedly at perturbed parameters.
double grad_check(Network& net,
                  const std::function<double(const Network&, Gradients*)>& loss,
                  Rng& rng, int n_directions = 20, double h = 1e-5);

/// Lossless JSON checkpoint of one network (format piper2d-network v1).
std::string network_to_json(const Network& net);
Network network_from_json(const std::string& text);

}  // namespace piper::ad

#endif  // PIPER_AUTODIFF_HPP_
