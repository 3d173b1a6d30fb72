#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "scaleface/random.hpp"

using scaleface::mix_seed;
using scaleface::Rng;

TEST(Random, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.uniform(), b.uniform());
    ASSERT_EQ(a.normal(), b.normal());
  }
}

TEST(Random, MixSeedSeparatesStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 20; ++s)
    for (std::uint64_t k = 0; k < 20; ++k) seen.insert(mix_seed(s, k));
  EXPECT_EQ(seen.size(), 400u);
}

TEST(Random, UniformRangeAndIndexBounds) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.index(7), 7u);
  }
}

TEST(Random, NormalMoments) {
  Rng rng(2);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
    sum4 += x * x * x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sum2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(sum4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(Random, ChiSquareMeanAndVariance) {
  for (double dof : {0.5, 1.0, 3.0, 127.0}) {
    Rng rng(mix_seed(3, static_cast<std::uint64_t>(dof * 10)));
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = rng.chi_square(dof);
      ASSERT_GE(x, 0.0);
      sum += x;
      sum2 += x * x;
    }
    const double mean = sum / n, var = sum2 / n - mean * mean;
    EXPECT_NEAR(mean, dof, 4.0 * std::sqrt(2.0 * dof / n)) << dof;
    EXPECT_NEAR(var / (2.0 * dof), 1.0, 0.05) << dof;
  }
}

TEST(Random, UnitVectorHasUnitNorm) {
  Rng rng(4);
  std::vector<double> v(33);
  for (int k = 0; k < 100; ++k) {
    rng.unit_vector(v);
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    ASSERT_NEAR(n2, 1.0, 1e-12);
  }
}

TEST(Random, ShuffleIsAPermutation) {
  Rng rng(5);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  const std::vector<int> original = v;
  rng.shuffle(std::span<int>(v));
  std::set<int> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 50u);
  EXPECT_NE(v, original);
}
