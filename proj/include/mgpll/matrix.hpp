#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mgpll/errors.hpp"

namespace mgpll {

// Dense row-major matrix of 64-bit floats; the only tensor type in the
// library. Rows are batch instances, columns are features/classes.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(size_check(rows, cols)) {}
  Matrix(int rows, int cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (static_cast<std::size_t>(rows_) * cols_ != data_.size()) {
      throw InvalidArgument("Matrix: data length does not match rows*cols");
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = static_cast<int>(init.size());
    cols_ = rows_ ? static_cast<int>(init.begin()->size()) : 0;
    data_.reserve(static_cast<std::size_t>(rows_) * cols_);
    for (const auto& r : init) {
      if (static_cast<int>(r.size()) != cols_) {
        throw InvalidArgument("Matrix: ragged initializer");
      }
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix zeros(int rows, int cols) { return Matrix(rows, cols); }
  static Matrix filled(int rows, int cols, double v) {
    Matrix m(rows, cols);
    for (auto& x : m.data_) x = v;
    return m;
  }
  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<double> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(int r) const { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  static std::size_t size_check(int rows, int cols) {
    if (rows < 0 || cols < 0) throw InvalidArgument("Matrix: negative dimension");
    return static_cast<std::size_t>(rows) * cols;
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

inline bool all_finite(const Matrix& m) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline void ensure_finite(const Matrix& m, const char* context) {
  if (!all_finite(m)) {
    throw NumericError(std::string(context) + ": non-finite entry");
  }
}

inline void ensure_finite(std::span<const double> v, const char* context) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(context) + ": non-finite entry");
    }
  }
}

// a (n x k) * b (k x m) -> (n x m)
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidArgument("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

// aT (k x n) * b (k x m) -> (n x m); used for weight gradients.
inline Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InvalidArgument("matmul_at_b: row counts differ");
  Matrix out(a.cols(), b.cols());
  for (int k = 0; k < a.rows(); ++k) {
    for (int i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
    }
  }
  return out;
}

// a (n x k) * bT (m x k) -> (n x m); used for input gradients.
inline Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvalidArgument("matmul_a_bt: column counts differ");
  Matrix out(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      out(i, j) = s;
    }
  }
  return out;
}

inline void add_row_inplace(Matrix& m, std::span<const double> v) {
  if (static_cast<int>(v.size()) != m.cols()) {
    throw InvalidArgument("add_row_inplace: length mismatch");
  }
  for (int i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (int j = 0; j < m.cols(); ++j) r[j] += v[j];
  }
}

inline std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> s(m.cols(), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (int j = 0; j < m.cols(); ++j) s[j] += r[j];
  }
  return s;
}

// Columns of a followed by columns of b, rows aligned.
inline Matrix hcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InvalidArgument("hcat: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    auto r = out.row(i);
    auto ra = a.row(i);
    auto rb = b.row(i);
    for (int j = 0; j < a.cols(); ++j) r[j] = ra[j];
    for (int j = 0; j < b.cols(); ++j) r[a.cols() + j] = rb[j];
  }
  return out;
}

// Columns [from, to) as a new matrix.
inline Matrix take_columns(const Matrix& m, int from, int to) {
  if (from < 0 || to > m.cols() || from > to) throw InvalidArgument("take_columns: bad range");
  Matrix out(m.rows(), to - from);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = from; j < to; ++j) out(i, j - from) = m(i, j);
  }
  return out;
}

inline Matrix take_rows(const Matrix& m, std::span<const int> idx) {
  Matrix out(static_cast<int>(idx.size()), m.cols());
  for (int i = 0; i < out.rows(); ++i) {
    if (idx[i] < 0 || idx[i] >= m.rows()) throw InvalidArgument("take_rows: index out of range");
    auto src = m.row(idx[i]);
    auto dst = out.row(i);
    for (int j = 0; j < m.cols(); ++j) dst[j] = src[j];
  }
  return out;
}

inline double mean_all(const Matrix& m) {
  if (m.empty()) return 0.0;
  double s = 0.0;
  for (double v : m.data()) s += v;
  return s / static_cast<double>(m.data().size());
}

// Index of the row maximum; ties resolve to the lowest index.
inline int argmax_row(std::span<const double> r) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(r.size()); ++j) {
    if (r[j] > r[best]) best = j;
  }
  return best;
}

}  // namespace mgpll
