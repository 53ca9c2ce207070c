#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flsim/errors.hpp"
#include "flsim/rng.hpp"

namespace flsim {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Output probabilities are kept strictly inside (0, 1); this is also the
// clamp applied before the logs in the cross-entropy.
inline constexpr double kProbEpsilon = 1e-7;

// Fully connected feed-forward classifier: ReLU hidden layers, one sigmoid
// output unit.  weights[i] has shape dims[i+1] x dims[i]; biases start at
// zero.  Scalar is float in the simulator and double in numerical tests.
template <typename Scalar>
struct MlpParams {
  std::vector<int> dims;
  std::vector<MatX<Scalar>> weights;
  std::vector<VecX<Scalar>> biases;

  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return dims.empty() ? 0 : dims.front(); }

  bool same_shape(const MlpParams& other) const {
    return dims == other.dims;
  }

  template <typename Other>
  MlpParams<Other> cast() const {
    MlpParams<Other> out;
    out.dims = dims;
    out.weights.reserve(weights.size());
    out.biases.reserve(biases.size());
    for (const auto& w : weights) out.weights.push_back(w.template cast<Other>());
    for (const auto& b : biases) out.biases.push_back(b.template cast<Other>());
    return out;
  }

  // Total scalar parameter count.
  std::int64_t size() const {
    std::int64_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
  }
};

template <typename Scalar>
struct Gradients {
  std::vector<MatX<Scalar>> weights;
  std::vector<VecX<Scalar>> biases;
};

inline void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 3)
    throw ShapeError("mlp: need at least input, one hidden and output layer, got " +
                     std::to_string(dims.size()) + " dims");
  for (int d : dims)
    if (d < 1) throw ShapeError("mlp: layer width must be positive, got " + std::to_string(d));
  if (dims.back() != 1)
    throw ShapeError("mlp: output layer must have width 1, got " + std::to_string(dims.back()));
}

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.  Draws
// are made in double then cast, so float and double instantiations of the
// same seed describe the same underlying model.
template <typename Scalar = float>
MlpParams<Scalar> init_mlp(const std::vector<int>& dims, std::uint64_t seed) {
  check_dims(dims);
  MlpParams<Scalar> p;
  p.dims = dims;
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int fan_in = dims[i], fan_out = dims[i + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    MatX<Scalar> w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c)
        w(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
    p.weights.push_back(std::move(w));
    p.biases.push_back(VecX<Scalar>::Zero(fan_out));
  }
  return p;
}

namespace detail {

template <typename Scalar>
void check_forward_shapes(const MlpParams<Scalar>& p, Eigen::Index cols) {
  if (p.weights.empty()) throw ShapeError("mlp: uninitialized parameters");
  if (cols != p.input_dim())
    throw ShapeError("mlp: input has " + std::to_string(cols) + " features, model expects " +
                     std::to_string(p.input_dim()));
}

template <typename Scalar>
VecX<Scalar> sigmoid_clamped(const VecX<Scalar>& z) {
  const Scalar lo = static_cast<Scalar>(kProbEpsilon);
  const Scalar hi = static_cast<Scalar>(1.0 - kProbEpsilon);
  VecX<Scalar> p(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i)
    p[i] = Scalar(1) / (Scalar(1) + std::exp(-z[i]));
  return p.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace detail

// Forward pass over a batch (one sample per row).  Returns per-sample
// probabilities, each strictly inside (0, 1).
template <typename Scalar>
VecX<Scalar> forward(const MlpParams<Scalar>& p, const MatX<Scalar>& inputs) {
  detail::check_forward_shapes(p, inputs.cols());
  MatX<Scalar> a = inputs;
  const int L = p.layer_count();
  for (int l = 0; l < L - 1; ++l) {
    a = ((a * p.weights[l].transpose()).rowwise() + p.biases[l].transpose())
            .cwiseMax(Scalar(0));
  }
  VecX<Scalar> z =
      (a * p.weights[L - 1].transpose()).col(0).array() + p.biases[L - 1][0];
  return detail::sigmoid_clamped<Scalar>(z);
}

// Mean binary cross-entropy over the batch.  Probabilities are clamped to
// [1e-7, 1-1e-7] before the logs; accumulation is in double regardless of
// Scalar.
template <typename Scalar>
Scalar bce_loss(const VecX<Scalar>& probs, const VecX<Scalar>& labels) {
  if (probs.size() == 0) throw DataError("bce_loss: empty batch");
  if (probs.size() != labels.size())
    throw ShapeError("bce_loss: " + std::to_string(probs.size()) + " probs vs " +
                     std::to_string(labels.size()) + " labels");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double y = static_cast<double>(labels[i]);
    if (y != 0.0 && y != 1.0)
      throw DataError("bce_loss: label must be 0 or 1, got " + std::to_string(y));
    double p = static_cast<double>(probs[i]);
    p = std::min(std::max(p, kProbEpsilon), 1.0 - kProbEpsilon);
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return static_cast<Scalar>(acc / static_cast<double>(probs.size()));
}

// Backprop for the sigmoid + cross-entropy head: dL/dz at the output is
// (p - y) / batch, hidden layers use the ReLU mask.  Gradients are averaged
// over the batch, shapes mirror the parameters.
template <typename Scalar>
Gradients<Scalar> backward(const MlpParams<Scalar>& p, const MatX<Scalar>& inputs,
                           const VecX<Scalar>& labels) {
  detail::check_forward_shapes(p, inputs.cols());
  if (inputs.rows() != labels.size())
    throw ShapeError("backward: " + std::to_string(inputs.rows()) + " rows vs " +
                     std::to_string(labels.size()) + " labels");
  if (inputs.rows() == 0) throw DataError("backward: empty batch");

  const int L = p.layer_count();
  const Eigen::Index batch = inputs.rows();

  std::vector<MatX<Scalar>> acts;  // acts[l] = input to layer l
  acts.reserve(L);
  acts.push_back(inputs);
  for (int l = 0; l < L - 1; ++l) {
    acts.push_back(((acts.back() * p.weights[l].transpose()).rowwise() +
                    p.biases[l].transpose())
                       .cwiseMax(Scalar(0)));
  }
  VecX<Scalar> z =
      (acts.back() * p.weights[L - 1].transpose()).col(0).array() + p.biases[L - 1][0];
  VecX<Scalar> probs = detail::sigmoid_clamped<Scalar>(z);

  Gradients<Scalar> g;
  g.weights.resize(L);
  g.biases.resize(L);

  // delta holds dL/dz for the current layer, one row per sample.
  MatX<Scalar> delta = (probs - labels) / static_cast<Scalar>(batch);
  for (int l = L - 1; l >= 0; --l) {
    g.weights[l] = delta.transpose() * acts[l];
    g.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      MatX<Scalar> mask = (acts[l].array() > Scalar(0)).template cast<Scalar>();
      delta = (delta * p.weights[l]).cwiseProduct(mask);
    }
  }
  return g;
}

}  // namespace flsim
