#include "mgpll/rng.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <vector>

using namespace mgpll;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next(), b.next());
    EXPECT_EQ(a.uniform(), b.uniform());
  }
}

TEST(Rng, UniformRange) {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-1.0, 1.0);
    EXPECT_GE(u, -1.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, BelowBoundsAndCoverage) {
  Rng rng(3);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const auto v = rng.below(5);
    ASSERT_LT(v, 5u);
    ++counts[v];
  }
  for (int c : counts) EXPECT_GT(c, 800);  // roughly uniform
  EXPECT_THROW(rng.below(0), InvalidArgument);
}

TEST(Rng, CategoricalHonorsWeights) {
  Rng rng(11);
  std::vector<double> w{0.0, 1.0, 3.0};
  int c1 = 0, c2 = 0;
  for (int i = 0; i < 4000; ++i) {
    const int k = rng.categorical(w);
    ASSERT_NE(k, 0);  // zero-weight class never drawn
    (k == 1 ? c1 : c2) += 1;
  }
  EXPECT_NEAR(static_cast<double>(c2) / (c1 + c2), 0.75, 0.05);
  EXPECT_THROW(rng.categorical(std::vector<double>{0.0, 0.0}), InvalidArgument);
  EXPECT_THROW(rng.categorical(std::vector<double>{-1.0, 2.0}), InvalidArgument);
}

TEST(Rng, ShuffleIsSeededPermutation) {
  std::vector<int> v(20);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng a(5), b(5);
  a.shuffle(v);
  b.shuffle(w);
  EXPECT_EQ(v, w);
  std::sort(v.begin(), v.end());
  std::vector<int> sorted(20);
  std::iota(sorted.begin(), sorted.end(), 0);
  EXPECT_EQ(v, sorted);
}

TEST(Rng, StateRoundTrip) {
  Rng a(99);
  for (int i = 0; i < 17; ++i) a.next();
  const std::string state = a.state_string();
  Rng b(0);
  b.set_state(state);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(a.next(), b.next());
  Rng c(0);
  EXPECT_THROW(c.set_state("definitely not an engine state"), FormatError);
}

TEST(Rng, NormalMomentsRough) {
  Rng rng(123);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal(2.0, 0.5);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 2.0, 0.02);
  EXPECT_NEAR(var, 0.25, 0.02);
}
