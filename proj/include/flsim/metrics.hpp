#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "flsim/errors.hpp"

namespace flsim {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
};

// Threshold rule: p >= threshold predicts the positive (attack) class.
template <typename DerivedP, typename DerivedL>
ConfusionCounts confusion(const Eigen::MatrixBase<DerivedP>& probs,
                          const Eigen::MatrixBase<DerivedL>& labels,
                          double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw InvalidArgument("confusion: threshold must lie in (0,1), got " +
                          std::to_string(threshold));
  if (probs.size() != labels.size())
    throw ShapeError("confusion: " + std::to_string(probs.size()) + " probs vs " +
                     std::to_string(labels.size()) + " labels");
  ConfusionCounts c;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const bool pred = static_cast<double>(probs[i]) >= threshold;
    const double y = static_cast<double>(labels[i]);
    if (y != 0.0 && y != 1.0)
      throw DataError("confusion: label must be 0 or 1, got " + std::to_string(y));
    const bool truth = y == 1.0;
    if (pred && truth)
      ++c.tp;
    else if (pred && !truth)
      ++c.fp;
    else if (!pred && truth)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

// All three scores define 0/0 as 0, so degenerate count patterns (no
// positives predicted, no positives present) score zero instead of NaN.
inline double tpr(const ConfusionCounts& c) {
  const std::int64_t den = c.tp + c.fn;
  return den == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(den);
}

inline double precision(const ConfusionCounts& c) {
  const std::int64_t den = c.tp + c.fp;
  return den == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(den);
}

inline double f1_score(const ConfusionCounts& c) {
  const double p = precision(c);
  const double r = tpr(c);
  const double den = p + r;
  return den == 0.0 ? 0.0 : 2.0 * p * r / den;
}

}  // namespace flsim
