#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "flsim/errors.hpp"

namespace flsim {

// Normalized fixed-width histogram.  densities sum to 1; from_empty flags
// the uniform fallback used when no values were supplied.
struct FeatureHistogram {
  std::string feature_name;
  std::vector<double> bin_edges;  // bins+1 ascending edges
  std::vector<double> densities;  // length bins
  bool from_empty = false;

  std::size_t bins() const { return densities.size(); }
};

// Values outside [lo, hi] are clamped into the first / last bin rather than
// dropped, so the histogram always accounts for every input value.
inline FeatureHistogram histogram(const std::vector<double>& values, int bins,
                                  double lo, double hi,
                                  std::string feature_name = {}) {
  if (bins < 1) throw InvalidArgument("histogram: bin count must be >= 1");
  if (!(lo < hi))
    throw InvalidArgument("histogram: range [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + ") is empty");
  FeatureHistogram h;
  h.feature_name = std::move(feature_name);
  h.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  const double width = (hi - lo) / bins;
  for (int i = 0; i <= bins; ++i) h.bin_edges[static_cast<std::size_t>(i)] = lo + width * i;
  h.bin_edges.back() = hi;

  h.densities.assign(static_cast<std::size_t>(bins), 0.0);
  if (values.empty()) {
    h.from_empty = true;
    const double u = 1.0 / bins;
    std::fill(h.densities.begin(), h.densities.end(), u);
    return h;
  }
  for (double v : values) {
    auto idx = static_cast<long>(std::floor((v - lo) / width));
    idx = std::clamp<long>(idx, 0, bins - 1);
    h.densities[static_cast<std::size_t>(idx)] += 1.0;
  }
  const double n = static_cast<double>(values.size());
  for (double& d : h.densities) d /= n;
  return h;
}

// Jensen-Shannon distance between two histograms over identical edges:
// sqrt(JS divergence) with base-2 logs, so the result lives in [0, 1].
// 0 * log(0/x) counts as 0.
inline double jsd(const FeatureHistogram& a, const FeatureHistogram& b) {
  if (a.bin_edges != b.bin_edges)
    throw InvalidArgument("jsd: histograms use different binnings");
  double div = 0.0;
  for (std::size_t i = 0; i < a.densities.size(); ++i) {
    const double p = a.densities[i];
    const double q = b.densities[i];
    const double m = 0.5 * (p + q);
    // Per-bin term built before accumulating, so swapping the arguments
    // reorders only a commutative two-term sum and the result is bitwise
    // symmetric.
    double term = 0.0;
    if (p > 0.0) term += 0.5 * p * std::log2(p / m);
    if (q > 0.0) term += 0.5 * q * std::log2(q / m);
    div += term;
  }
  // Rounding can push the divergence a hair outside [0, 1].
  div = std::clamp(div, 0.0, 1.0);
  return std::sqrt(div);
}

// Per-dataset feature values: values[j] lists feature j's observations.
struct FeatureValueSet {
  std::string tag;
  std::vector<std::vector<double>> values;
};

struct JsdMatrix {
  std::vector<std::string> tags;            // row labels
  std::vector<std::string> feature_names;   // column labels
  Eigen::MatrixXd values;                   // tags x features
};

// Entry (i, j) = mean Jensen-Shannon distance between dataset i and every
// other dataset on feature j.  One shared binning per feature, spanning the
// min/max observed across all datasets (degenerate ranges are widened to a
// unit interval so constant features still bin cleanly).
inline JsdMatrix jsd_matrix(const std::vector<FeatureValueSet>& datasets,
                            const std::vector<std::string>& feature_names,
                            int bins) {
  if (datasets.size() < 2)
    throw InvalidArgument("jsd_matrix: need at least two datasets");
  const std::size_t nf = feature_names.size();
  for (const auto& d : datasets)
    if (d.values.size() != nf)
      throw ShapeError("jsd_matrix: dataset '" + d.tag + "' has " +
                       std::to_string(d.values.size()) + " feature lists, expected " +
                       std::to_string(nf));

  JsdMatrix out;
  out.feature_names = feature_names;
  out.values.resize(static_cast<Eigen::Index>(datasets.size()),
                    static_cast<Eigen::Index>(nf));
  for (const auto& d : datasets) out.tags.push_back(d.tag);

  for (std::size_t j = 0; j < nf; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& d : datasets)
      for (double v : d.values[j]) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    if (!(lo < hi)) {  // all-equal or all-empty feature
      lo = std::isfinite(lo) ? lo - 0.5 : 0.0;
      hi = lo + 1.0;
    }
    std::vector<FeatureHistogram> hists;
    hists.reserve(datasets.size());
    for (const auto& d : datasets)
      hists.push_back(histogram(d.values[j], bins, lo, hi, feature_names[j]));

    for (std::size_t i = 0; i < datasets.size(); ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < datasets.size(); ++k)
        if (k != i) acc += jsd(hists[i], hists[k]);
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          acc / static_cast<double>(datasets.size() - 1);
    }
  }
  return out;
}

}  // namespace flsim
