#pragma once

#include <cmath>

#include "mgpll/matrix.hpp"

namespace mgpll {

// Floor under log arguments so a confidently wrong prediction yields a large
// finite loss instead of -inf.
inline constexpr double kLogFloor = 1e-12;

// Mean squared error over all entries (row mean of per-row means).
inline double mse(const Matrix& pred, const Matrix& target) {
  if (!pred.same_shape(target)) throw InvalidArgument("mse: shape mismatch");
  if (pred.empty()) throw InvalidArgument("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.data().size(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    s += d * d;
  }
  const double v = s / static_cast<double>(pred.data().size());
  if (!std::isfinite(v)) throw NumericError("mse: non-finite value");
  return v;
}

// d mse / d pred, target held constant.
inline Matrix mse_grad(const Matrix& pred, const Matrix& target) {
  if (!pred.same_shape(target)) throw InvalidArgument("mse_grad: shape mismatch");
  Matrix g(pred.rows(), pred.cols());
  const double scale = 2.0 / static_cast<double>(pred.data().size());
  for (std::size_t i = 0; i < pred.data().size(); ++i) {
    g.data()[i] = scale * (pred.data()[i] - target.data()[i]);
  }
  return g;
}

namespace detail {
inline void check_cross_entropy_inputs(const Matrix& prob, const Matrix& onehot) {
  if (!prob.same_shape(onehot)) throw InvalidArgument("cross_entropy: shape mismatch");
  if (prob.empty()) throw InvalidArgument("cross_entropy: empty input");
  for (int i = 0; i < prob.rows(); ++i) {
    double psum = 0.0;
    int hot = 0;
    for (int j = 0; j < prob.cols(); ++j) {
      const double p = prob(i, j);
      if (p < -1e-9 || p > 1.0 + 1e-9) throw InvalidArgument("cross_entropy: probability outside [0,1]");
      psum += p;
      const double y = onehot(i, j);
      if (y != 0.0 && y != 1.0) throw InvalidArgument("cross_entropy: target is not one-hot");
      if (y == 1.0) ++hot;
    }
    if (std::fabs(psum - 1.0) > 1e-6) throw InvalidArgument("cross_entropy: probability row not on the simplex");
    if (hot != 1) throw InvalidArgument("cross_entropy: target row must have exactly one hot entry");
  }
}
}  // namespace detail

// Cross entropy between probability rows and one-hot targets, averaged over
// batch rows.
inline double cross_entropy(const Matrix& prob, const Matrix& onehot) {
  detail::check_cross_entropy_inputs(prob, onehot);
  double s = 0.0;
  for (int i = 0; i < prob.rows(); ++i) {
    for (int j = 0; j < prob.cols(); ++j) {
      if (onehot(i, j) == 1.0) s -= std::log(std::max(prob(i, j), kLogFloor));
    }
  }
  const double v = s / prob.rows();
  if (!std::isfinite(v)) throw NumericError("cross_entropy: non-finite value");
  return v;
}

// d cross_entropy / d prob. Zero where the probability sits below the log
// floor (the clamped region is constant).
inline Matrix cross_entropy_grad(const Matrix& prob, const Matrix& onehot) {
  detail::check_cross_entropy_inputs(prob, onehot);
  Matrix g(prob.rows(), prob.cols());
  for (int i = 0; i < prob.rows(); ++i) {
    for (int j = 0; j < prob.cols(); ++j) {
      if (onehot(i, j) == 1.0 && prob(i, j) > kLogFloor) {
        g(i, j) = -1.0 / (prob(i, j) * prob.rows());
      }
    }
  }
  return g;
}

}  // namespace mgpll
