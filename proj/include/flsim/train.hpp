#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "flsim/mlp.hpp"
#include "flsim/rng.hpp"

namespace flsim {

// Plain mini-batch gradient descent, no momentum or adaptive scaling.
// mbgd_steps is the requested number of update steps per epoch; the batch
// size follows from it as max(floor(n / mbgd_steps), 1), so a step budget of
// 1 means full-batch descent.
struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 1;
  int mbgd_steps = 1;
};

inline void check_train_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0))
    throw InvalidArgument("train: learning rate must be non-negative");
  if (cfg.epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (cfg.mbgd_steps < 1) throw InvalidArgument("train: mbgd_steps must be >= 1");
}

// Runs cfg.epochs passes over (inputs, labels).  Each epoch shuffles the
// sample order (Fisher-Yates on the given stream) and walks it in batches of
// max(floor(n / mbgd_steps), 1) rows, the last batch possibly short.  The
// whole routine is bit-deterministic in (params, data, cfg, seed).
template <typename Scalar>
MlpParams<Scalar> mbgd_fit(MlpParams<Scalar> params, const MatX<Scalar>& inputs,
                           const VecX<Scalar>& labels, const TrainConfig& cfg,
                           std::uint64_t seed) {
  check_train_config(cfg);
  const Eigen::Index n = inputs.rows();
  if (n == 0) throw DataError("mbgd_fit: empty training set");
  if (labels.size() != n)
    throw ShapeError("mbgd_fit: " + std::to_string(n) + " rows vs " +
                     std::to_string(labels.size()) + " labels");

  const Eigen::Index batch_size =
      std::max<Eigen::Index>(n / cfg.mbgd_steps, 1);
  const Scalar lr = static_cast<Scalar>(cfg.learning_rate);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed);

  MatX<Scalar> bx;
  VecX<Scalar> by;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    for (Eigen::Index start = 0; start < n; start += batch_size) {
      const Eigen::Index len = std::min(batch_size, n - start);
      bx.resize(len, inputs.cols());
      by.resize(len);
      for (Eigen::Index i = 0; i < len; ++i) {
        bx.row(i) = inputs.row(order[static_cast<std::size_t>(start + i)]);
        by[i] = labels[order[static_cast<std::size_t>(start + i)]];
      }
      Gradients<Scalar> g = backward(params, bx, by);
      for (int l = 0; l < params.layer_count(); ++l) {
        params.weights[l] -= lr * g.weights[l];
        params.biases[l] -= lr * g.biases[l];
      }
    }
  }
  return params;
}

}  // namespace flsim
