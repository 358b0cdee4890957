#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "mgpll/dataset.hpp"
#include "mgpll/matrix.hpp"

namespace mgpll {

enum class KnnWeighting { InverseDistance, Uniform };

// Lazy k-NN over the training data: prediction scores each class by the
// candidate-weighted vote of the k nearest neighbors.
struct KnnModel {
  Matrix features;    // stored verbatim
  Matrix candidates;  // stored verbatim
  int k = 0;
  KnnWeighting weighting = KnnWeighting::InverseDistance;
};

inline KnnModel plknn_fit(const PlDataset& ds, int k, KnnWeighting weighting = KnnWeighting::InverseDistance) {
  validate_dataset(ds, "plknn_fit");
  if (k < 1) throw InvalidArgument("plknn_fit: k must be at least 1");
  if (k > ds.size()) throw InvalidArgument("plknn_fit: k exceeds the number of training instances");
  return {ds.features, ds.candidates, k, weighting};
}

// Weighted candidate voting over the k nearest neighbors (Euclidean
// distance). Neighbor ties in distance break by original training index, so
// predictions do not depend on storage order. Class ties break to the lowest
// class index.
inline int plknn_predict(const KnnModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.features.cols()) {
    throw InvalidArgument("plknn_predict: feature dimension mismatch");
  }
  const int n = model.features.rows();
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    auto r = model.features.row(i);
    double s = 0.0;
    for (int j = 0; j < model.features.cols(); ++j) {
      const double d = r[j] - x[j];
      s += d * d;
    }
    dist[i] = {std::sqrt(s), i};
  }
  std::partial_sort(dist.begin(), dist.begin() + model.k, dist.end());

  std::vector<double> score(model.candidates.cols(), 0.0);
  for (int t = 0; t < model.k; ++t) {
    const auto [d, i] = dist[t];
    const double w = model.weighting == KnnWeighting::InverseDistance ? 1.0 / (d + 1e-9) : 1.0;
    auto cand = model.candidates.row(i);
    for (int c = 0; c < static_cast<int>(score.size()); ++c) score[c] += w * cand[c];
  }
  return argmax_row(score);
}

inline std::vector<int> plknn_predict(const KnnModel& model, const Matrix& x) {
  std::vector<int> out(x.rows());
  for (int i = 0; i < x.rows(); ++i) out[i] = plknn_predict(model, x.row(i));
  return out;
}

}  // namespace mgpll
