#include <gtest/gtest.h>

#include <cmath>

#include "dualmod/rng.hpp"
#include "dualmod/spatial.hpp"

using namespace dualmod;

TEST(TokenGrid, CoordinateBijection) {
  TokenGrid g(5, 7);
  for (int t = 0; t < g.tokens(); ++t) {
    EXPECT_EQ(g.token_row(t) * g.cols + g.token_col(t), t);
    EXPECT_GE(g.token_row(t), 0);
    EXPECT_LT(g.token_row(t), g.rows);
    EXPECT_GE(g.token_col(t), 0);
    EXPECT_LT(g.token_col(t), g.cols);
  }
  EXPECT_THROW(TokenGrid(0, 3), DimensionError);
}

TEST(PairwiseDistance, SingleToken) {
  Tensor s = pairwise_distance(TokenGrid(1, 1));
  ASSERT_EQ(s.shape(), (Shape{1, 1}));
  EXPECT_EQ(s[0], 0.0);
}

TEST(PairwiseDistance, TwoTokensUnitSpacing) {
  Tensor s = pairwise_distance(TokenGrid(1, 2));
  EXPECT_EQ(s(0, 0), 0.0);
  EXPECT_EQ(s(0, 1), 1.0);
  EXPECT_EQ(s(1, 0), 1.0);
  EXPECT_EQ(s(1, 1), 0.0);
}

TEST(PairwiseDistance, DiagonalOfTwoByTwo) {
  TokenGrid g(2, 2);
  Tensor s = pairwise_distance(g);
  // tokens 0=(0,0) and 3=(1,1)
  EXPECT_NEAR(s(0, 3), std::sqrt(2.0), 1e-15);
}

TEST(PairwiseDistance, SymmetricZeroDiagonalPositive) {
  Tensor s = pairwise_distance(TokenGrid(4, 6));
  const int n = 24;
  for (int i = 0; i < n; ++i) {
    EXPECT_EQ(s(i, i), 0.0);
    for (int j = 0; j < n; ++j) {
      EXPECT_EQ(s(i, j), s(j, i));  // exact
      if (i != j) EXPECT_GT(s(i, j), 0.0);
    }
  }
}

TEST(PairwiseDistance, TriangleInequality) {
  Tensor s = pairwise_distance(TokenGrid(5, 5));
  Rng rng(31);
  for (int rep = 0; rep < 200; ++rep) {
    const int a = static_cast<int>(rng.uniform_int(25));
    const int b = static_cast<int>(rng.uniform_int(25));
    const int c = static_cast<int>(rng.uniform_int(25));
    EXPECT_LE(s(a, c), s(a, b) + s(b, c) + 1e-12);
  }
}

TEST(DistanceCache, BitIdenticalToFreshComputation) {
  auto cached = distance_matrix(3, 4);
  Tensor fresh = pairwise_distance(TokenGrid(3, 4));
  ASSERT_EQ(cached->size(), fresh.size());
  for (std::size_t i = 0; i < fresh.size(); ++i) EXPECT_EQ((*cached)[i], fresh[i]);
  // same geometry returns the same cached object
  EXPECT_EQ(cached.get(), distance_matrix(3, 4).get());
  EXPECT_FALSE(cached->requires_grad());
}
