#include <gtest/gtest.h>

#include <cmath>

#include "dualmod/afm.hpp"
#include "dualmod/gradcheck.hpp"
#include "dualmod/rng.hpp"

using namespace dualmod;

namespace {
Tensor rand3(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}
}  // namespace

TEST(FusionWeight, ZeroParamsGiveHalf) {
  ParamStore store;
  Rng rng(3);
  FusionGate gate(store, "gate", 8, 4, rng);
  for (auto& p : store.items())
    for (std::size_t i = 0; i < p.size(); ++i) p.value()[i] = 0.0;
  FeaturePair pair(rand3(rng, Shape{8, 3, 3}), rand3(rng, Shape{8, 3, 3}));
  EXPECT_DOUBLE_EQ(fusion_weight(pair, gate)[0], 0.5);
}

TEST(FusionWeight, LargeBiasSaturates) {
  ParamStore store;
  Rng rng(5);
  FusionGate gate(store, "gate", 8, 4, rng);
  for (auto& p : store.items())
    for (std::size_t i = 0; i < p.size(); ++i) p.value()[i] = 0.0;
  gate.conv2_b.value()[0] = 20.0;
  FeaturePair pair(rand3(rng, Shape{8, 2, 2}), rand3(rng, Shape{8, 2, 2}));
  const double w = fusion_weight(pair, gate)[0];
  EXPECT_NEAR(w, 1.0, 1e-8);
  EXPECT_LT(w, 1.0);
}

TEST(FusionWeight, SwapSymmetryBitIdentical) {
  ParamStore store;
  Rng rng(7);
  FusionGate gate(store, "gate", 8, 4, rng);
  Tensor a = rand3(rng, Shape{8, 3, 3});
  Tensor b = rand3(rng, Shape{8, 3, 3});
  const double w1 = fusion_weight(FeaturePair(a, b), gate)[0];
  const double w2 = fusion_weight(FeaturePair(b, a), gate)[0];
  EXPECT_EQ(w1, w2);
}

TEST(FusionWeight, ChannelMismatchRejected) {
  ParamStore store;
  Rng rng(9);
  FusionGate gate(store, "gate", 8, 4, rng);
  FeaturePair pair(rand3(rng, Shape{4, 2, 2}), rand3(rng, Shape{4, 2, 2}));
  EXPECT_THROW(fusion_weight(pair, gate), DimensionError);
  EXPECT_THROW(FeaturePair(rand3(rng, Shape{4, 2, 2}), rand3(rng, Shape{4, 2, 3})), DimensionError);
}

TEST(Fuse, IdenticalModalities) {
  Rng rng(11);
  Tensor f = rand3(rng, Shape{4, 2, 2});
  for (double wv : {0.1, 0.5, 0.9}) {
    Tensor fused = fuse(FeaturePair(f, f), Tensor::scalar(wv));
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(fused[i], f[i], 1e-12);
  }
}

TEST(Fuse, MidpointAndScalarCombination) {
  Rng rng(13);
  Tensor a = rand3(rng, Shape{2, 2, 2});
  Tensor b = rand3(rng, Shape{2, 2, 2});
  Tensor mid = fuse(FeaturePair(a, b), Tensor::scalar(0.5));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(mid[i], (a[i] + b[i]) / 2.0, 1e-15);

  Tensor rgb(Shape{1, 2, 2}, 2.0);
  Tensor th(Shape{1, 2, 2}, 0.0);
  Tensor fused = fuse(FeaturePair(rgb, th), Tensor::scalar(0.75));
  for (std::size_t i = 0; i < fused.size(); ++i) EXPECT_DOUBLE_EQ(fused[i], 1.5);
}

TEST(Fuse, ConvexityProperty) {
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor a = rand3(rng, Shape{3, 2, 2});
    Tensor b = rand3(rng, Shape{3, 2, 2});
    const double w = rng.uniform(0.001, 0.999);
    Tensor fused = fuse(FeaturePair(a, b), Tensor::scalar(w));
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_GE(fused[i], std::min(a[i], b[i]) - 1e-12);
      EXPECT_LE(fused[i], std::max(a[i], b[i]) + 1e-12);
    }
  }
}

TEST(Fuse, ThermalPriorityLimit) {
  ParamStore store;
  Rng rng(19);
  FusionGate gate(store, "gate", 8, 4, rng);
  for (auto& p : store.items())
    for (std::size_t i = 0; i < p.size(); ++i) p.value()[i] = 0.0;
  gate.conv2_b.value()[0] = -20.0;  // pre-sigmoid logit -> -inf regime
  Tensor a = rand3(rng, Shape{8, 2, 2});
  Tensor b = rand3(rng, Shape{8, 2, 2});
  FeaturePair pair(a, b);
  Tensor fused = fuse(pair, fusion_weight(pair, gate));
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(fused[i], b[i], 1e-7);
}

TEST(Fuse, WeightDomainEnforced) {
  Rng rng(21);
  Tensor a = rand3(rng, Shape{2, 2, 2});
  FeaturePair pair(a, a);
  EXPECT_THROW(fuse(pair, Tensor::scalar(0.0)), ContractError);
  EXPECT_THROW(fuse(pair, Tensor::scalar(1.0)), ContractError);
}

TEST(FusionGate, GradientsMatchFiniteDifferences) {
  ParamStore store;
  Rng rng(23);
  FusionGate gate(store, "gate", 8, 4, rng);
  Parameter frgb("rgb", rand3(rng, Shape{8, 3, 3}));
  Parameter fth("thermal", rand3(rng, Shape{8, 3, 3}));
  Tensor w = rand3(rng, Shape{8, 3, 3});
  std::vector<Parameter> params{frgb, fth};
  for (const Parameter& p : store.items()) params.push_back(p);
  auto f = [&]() {
    FeaturePair pair(frgb.value(), fth.value());
    return sum_all(mul(fuse(pair, fusion_weight(pair, gate)), w));
  };
  GradCheckResult r = finite_diff_check(f, params);
  EXPECT_TRUE(r.pass) << r.worst;
}
