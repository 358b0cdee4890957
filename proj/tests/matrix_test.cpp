#include "mgpll/matrix.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace mgpll;

TEST(Matrix, ConstructionAndInvariants) {
  Matrix m(2, 3);
  EXPECT_EQ(m.rows(), 2);
  EXPECT_EQ(m.cols(), 3);
  EXPECT_EQ(m.data().size(), 6u);
  for (double v : m.data()) EXPECT_EQ(v, 0.0);

  EXPECT_THROW(Matrix(2, 3, std::vector<double>(5)), InvalidArgument);
  EXPECT_THROW((Matrix{{1.0, 2.0}, {3.0}}), InvalidArgument);
}

TEST(Matrix, MatmulSmallKnown) {
  Matrix a{{1, 2}, {3, 4}};
  Matrix b{{5, 6}, {7, 8}};
  Matrix c = matmul(a, b);
  EXPECT_EQ(c(0, 0), 19);
  EXPECT_EQ(c(0, 1), 22);
  EXPECT_EQ(c(1, 0), 43);
  EXPECT_EQ(c(1, 1), 50);
  EXPECT_THROW(matmul(a, Matrix(3, 2)), InvalidArgument);
}

TEST(Matrix, TransposedProductsAgreeWithPlainMatmul) {
  Matrix a{{1, 2, 3}, {4, 5, 6}};        // 2x3
  Matrix b{{1, -1}, {0.5, 2}, {-3, 1}};  // 3x2

  Matrix at{{1, 4}, {2, 5}, {3, 6}};
  EXPECT_EQ(matmul_at_b(a, a), matmul(at, a));

  Matrix bt{{1, 0.5, -3}, {-1, 2, 1}};
  EXPECT_EQ(matmul_a_bt(a, bt), matmul(a, b));
}

TEST(Matrix, RowOpsAndSlicing) {
  Matrix m{{1, 2, 3}, {4, 5, 6}};
  std::vector<double> v{10, 20, 30};
  add_row_inplace(m, v);
  EXPECT_EQ(m(0, 0), 11);
  EXPECT_EQ(m(1, 2), 36);

  auto sums = column_sums(m);
  EXPECT_EQ(sums[0], 11 + 14);
  EXPECT_EQ(sums[2], 33 + 36);

  Matrix h = hcat(Matrix{{1}, {2}}, Matrix{{3, 4}, {5, 6}});
  EXPECT_EQ(h.cols(), 3);
  EXPECT_EQ(h(1, 2), 6);

  Matrix mid = take_columns(h, 1, 3);
  EXPECT_EQ(mid(0, 0), 3);
  EXPECT_EQ(mid(1, 1), 6);

  std::vector<int> idx{1, 0, 1};
  Matrix rows = take_rows(h, idx);
  EXPECT_EQ(rows.rows(), 3);
  EXPECT_EQ(rows(0, 0), 2);
  EXPECT_EQ(rows(1, 0), 1);
}

TEST(Matrix, FiniteChecks) {
  Matrix ok{{1.0, 2.0}};
  EXPECT_NO_THROW(ensure_finite(ok, "test"));
  Matrix bad{{1.0, std::numeric_limits<double>::quiet_NaN()}};
  EXPECT_THROW(ensure_finite(bad, "test"), NumericError);
  Matrix inf{{std::numeric_limits<double>::infinity(), 0.0}};
  EXPECT_FALSE(all_finite(inf));
}

TEST(Matrix, ArgmaxLowestIndexTieBreak) {
  std::vector<double> tie{0.5, 0.5};
  EXPECT_EQ(argmax_row(tie), 0);
  std::vector<double> v{0.1, 0.7, 0.7, 0.2};
  EXPECT_EQ(argmax_row(v), 1);
}

TEST(Matrix, IdentityAndMean) {
  Matrix eye = Matrix::identity(3);
  EXPECT_EQ(eye(0, 0), 1.0);
  EXPECT_EQ(eye(0, 1), 0.0);
  EXPECT_NEAR(mean_all(Matrix{{1, 2}, {3, 6}}), 3.0, 1e-15);
}
