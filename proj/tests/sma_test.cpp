#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dualmod/gradcheck.hpp"
#include "dualmod/selfcheck.hpp"
#include "dualmod/sma.hpp"

using namespace dualmod;

TEST(EffectiveParams, SpecValues) {
  ParamStore store;
  DecayParams p{Parameter("s", Tensor(Shape{3}, std::vector<double>{0.0, 0.0, 20.0})),
                Parameter("b", Tensor(Shape{3}, std::vector<double>{0.0, 0.0, 0.0})), 0.01};
  auto [scale, bias] = effective_params(p);
  EXPECT_DOUBLE_EQ(scale[0], 0.5);                   // sigmoid(0)
  EXPECT_NEAR(bias[0], std::log(2.0), 1e-15);        // softplus(0)
  EXPECT_NEAR(scale[2], 1.0, 1e-8);                  // sigmoid tail
  EXPECT_LT(scale[2], 1.0);                          // strictly inside (0,1)
}

TEST(DecayParamsInit, SpreadAndThreshold) {
  ParamStore store;
  DecayParams p = make_decay_params(store, "decay", 8);
  auto [scale, bias] = effective_params(p);
  EXPECT_NEAR(scale[0], 0.1, 1e-12);
  EXPECT_NEAR(scale[7], 0.9, 1e-12);
  std::set<double> distinct;
  for (int h = 0; h < 8; ++h) {
    distinct.insert(scale[h]);
    EXPECT_NEAR(bias[h], 1.0, 1e-12);
  }
  EXPECT_EQ(distinct.size(), 8u);
}

TEST(DecayMask, ThresholdGivesExactlyOne) {
  Tensor s(Shape{1, 1}, std::vector<double>{1.25});
  Tensor m = decay_mask(s, 0.37, 1.25, 0.01);
  EXPECT_EQ(m[0], 1.0);
}

TEST(DecayMask, ScalarPower) {
  // scale 0.5, bias 1, distance 3 -> shifted 2 -> 0.25
  Tensor s(Shape{1, 1}, std::vector<double>{3.0});
  EXPECT_NEAR(decay_mask(s, 0.5, 1.0, 0.01)[0], 0.25, 1e-15);
}

TEST(DecayMask, BelowThresholdSlightlyAboveOne) {
  // distance 0, bias 1, slope 0.01 -> shifted -0.01 -> 2^0.01
  Tensor s(Shape{1, 1}, std::vector<double>{0.0});
  const double m = decay_mask(s, 0.5, 1.0, 0.01)[0];
  EXPECT_NEAR(m, std::pow(2.0, 0.01), 1e-15);
  EXPECT_NEAR(m, 1.006956, 1e-6);
  EXPECT_GT(m, 1.0);
}

TEST(DecayMask, ContractErrors) {
  Tensor s(Shape{2, 2}, 1.0);
  EXPECT_THROW(decay_mask(s, 1.0, 1.0, 0.01), ContractError);
  EXPECT_THROW(decay_mask(s, 0.0, 1.0, 0.01), ContractError);
  EXPECT_THROW(decay_mask(s, 0.5, 0.0, 0.01), ContractError);
  Tensor rect(Shape{2, 3}, 1.0);
  EXPECT_THROW(decay_mask(rect, 0.5, 1.0, 0.01), DimensionError);
}

TEST(DecayMask, PositiveMonotoneSymmetric) {
  Tensor s = pairwise_distance(TokenGrid(4, 4));
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const double scale = rng.uniform(0.02, 0.98);
    const double bias = rng.uniform(0.05, 3.0);
    Tensor m = decay_mask(s, scale, bias, 0.01);
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j) {
        EXPECT_GT(m(i, j), 0.0);
        EXPECT_EQ(m(i, j), m(j, i));
      }
    // monotone in distance beyond the threshold
    double prev = 2.0;
    for (double d = bias; d < bias + 8.0; d += 0.5) {
      Tensor sd(Shape{1, 1}, std::vector<double>{d});
      const double v = decay_mask(sd, scale, bias, 0.01)[0];
      EXPECT_LE(v, prev);
      prev = v;
    }
  }
}

TEST(ModulatedAttention, AllOnesMaskEqualsVanillaBitwise) {
  Rng rng(17);
  Tensor q(Shape{5, 4}), k(Shape{5, 4}), v(Shape{5, 4});
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = rng.uniform(-1, 1);
    k[i] = rng.uniform(-1, 1);
    v[i] = rng.uniform(-1, 1);
  }
  Tensor ones(Shape{5, 5}, 1.0);
  Tensor a = modulated_attention(q, k, v, ones);
  Tensor b = vanilla_attention(q, k, v);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(ModulatedAttention, SingleTokenReturnsValue) {
  Tensor q(Shape{1, 3}, std::vector<double>{5, -2, 0.5});
  Tensor k(Shape{1, 3}, std::vector<double>{-1, 2, 3});
  Tensor v(Shape{1, 3}, std::vector<double>{7, 8, 9});
  Tensor m(Shape{1, 1}, std::vector<double>{0.3});
  Tensor y = modulated_attention(q, k, v, m);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y[i], v[i]);
}

TEST(ModulatedAttention, HandMaskedSoftmax) {
  // logits (after 1/sqrt(dk) scaling) = [[0,2],[2,0]], M = [[1,.5],[.5,1]]
  // row 0 masked = [0,1] -> softmax = [1/(1+e), e/(1+e)]
  const double r = std::sqrt(2.0);
  Tensor q(Shape{2, 2}, std::vector<double>{0, 2, 2, 0});
  Tensor k(Shape{2, 2}, std::vector<double>{r, 0, 0, r});
  Tensor v(Shape{2, 2}, std::vector<double>{1, 0, 0, 1});
  Tensor m(Shape{2, 2}, std::vector<double>{1, 0.5, 0.5, 1});
  Tensor y = modulated_attention(q, k, v, m);
  const double e = std::exp(1.0);
  EXPECT_NEAR(y(0, 0), 1.0 / (1.0 + e), 1e-9);
  EXPECT_NEAR(y(0, 1), e / (1.0 + e), 1e-9);
  EXPECT_NEAR(y(0, 1), 0.731059, 1e-6);
}

TEST(ModulatedAttention, RejectsNonPositiveMask) {
  Tensor q(Shape{2, 2}, 0.5), k(Shape{2, 2}, 0.5), v(Shape{2, 2}, 0.5);
  Tensor m(Shape{2, 2}, std::vector<double>{1, 0, 1, 1});
  EXPECT_THROW(modulated_attention(q, k, v, m), ContractError);
  Tensor wrong(Shape{3, 3}, 1.0);
  EXPECT_THROW(modulated_attention(q, k, v, wrong), DimensionError);
}

TEST(EncoderLayer, ZeroInputZeroBiasGivesZero) {
  ParamStore store;
  Rng rng(23);
  EncoderLayer layer(store, "enc", 8, 2, rng);
  Tensor x(Shape{6, 8}, 0.0);
  Tensor a = layer.attention_block(x, {}, MaskMode::MultiplyLogits);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], 0.0);
  Tensor y = layer.forward(x, {}, MaskMode::MultiplyLogits);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 0.0);
}

TEST(EncoderLayer, OneHeadReducesToSingleAttention) {
  ParamStore store;
  Rng rng(29);
  EncoderLayer layer(store, "enc", 6, 1, rng);
  Tensor x(Shape{4, 6});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  Tensor s = pairwise_distance(TokenGrid(2, 2));
  Tensor mask = decay_mask(s, 0.4, 1.0, 0.01);
  Tensor got = layer.attention_block(x, {mask}, MaskMode::MultiplyLogits);
  Tensor q = add_row_bias(matmul(x, layer.wq.value()), layer.bq.value());
  Tensor k = add_row_bias(matmul(x, layer.wk.value()), layer.bk.value());
  Tensor v = add_row_bias(matmul(x, layer.wv.value()), layer.bv.value());
  Tensor want =
      add_row_bias(matmul(modulated_attention(q, k, v, mask), layer.wo.value()), layer.bo.value());
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_DOUBLE_EQ(got[i], want[i]);
}

TEST(EncoderLayer, AttentionRowsAreDistributions) {
  // the row-softmax inside attention produces probability rows; checked via
  // the op directly on masked logits of a real layer configuration
  Rng rng(37);
  Tensor s = pairwise_distance(TokenGrid(3, 3));
  Tensor mask = decay_mask(s, 0.25, 1.0, 0.01);
  Tensor logits(Shape{9, 9});
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = rng.uniform(-3, 3);
  Tensor probs = softmax_rows(mul(logits, mask));
  for (std::size_t i = 0; i < 9; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 9; ++j) sum += probs(i, j);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(EncoderLayer, DecayGradientsThroughStack) {
  // beta_scale / beta_bias gradients through a full encoder layer vs central
  // differences on a 9-token grid, D=8, 2 heads
  ParamStore store;
  Rng rng(41);
  EncoderLayer layer(store, "enc", 8, 2, rng);
  DecayParams decay = make_decay_params(store, "decay", 2);
  for (std::size_t i = 0; i < decay.bias.size(); ++i) decay.bias.value()[i] += rng.uniform(0.02, 0.2);
  Tensor x(Shape{9, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  Tensor s = pairwise_distance(TokenGrid(3, 3));
  Tensor w(Shape{9, 8});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1, 1);
  for (MaskMode mode : {MaskMode::MultiplyLogits, MaskMode::AddLogMask}) {
    auto f = [&, mode]() {
      auto [es, eb] = effective_params(decay);
      auto masks = build_head_masks(s, es, eb, 0.01, mode);
      return sum_all(mul(layer.forward(x, masks, mode), w));
    };
    GradCheckResult r = finite_diff_check(f, {decay.scale, decay.bias});
    EXPECT_TRUE(r.pass) << "mode " << static_cast<int>(mode) << ": " << r.worst;
  }
}

TEST(VanillaLimit, MaskNearOneAndEncoderMatchesBaseline) {
  const double es = 1.0 / (1.0 + std::exp(-20.0));
  Tensor s = pairwise_distance(TokenGrid(3, 3));
  Tensor m = decay_mask(s, es, 1.0, 0.01);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_LT(std::abs(m[i] - 1.0), 1e-6);

  ParamStore store;
  Rng rng(43);
  EncoderLayer layer(store, "enc", 8, 2, rng);
  Tensor x(Shape{9, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  std::vector<Tensor> masks{m, m};
  Tensor with_mask = layer.forward(x, masks, MaskMode::MultiplyLogits);
  Tensor baseline = layer.forward(x, {}, MaskMode::MultiplyLogits);
  for (std::size_t i = 0; i < with_mask.size(); ++i)
    EXPECT_LT(std::abs(with_mask[i] - baseline[i]), 1e-5);
}

TEST(DumpDecayCurves, ThresholdIdentityAndSampling) {
  std::vector<double> scale{0.1, 0.5};
  std::vector<double> bias{1.0, 2.0};
  auto curves = dump_decay_curves(scale, bias, 0.01, 4.0, 0.25);
  ASSERT_EQ(curves.size(), 2 * 17u);
  for (const auto& p : curves) {
    if (p.distance == bias[p.head]) EXPECT_EQ(p.mask, 1.0);
    EXPECT_GT(p.mask, 0.0);
  }
  // head 0: scale .1, bias 1 -> M(2) = 0.1
  bool found = false;
  for (const auto& p : curves)
    if (p.head == 0 && p.distance == 2.0) {
      EXPECT_NEAR(p.mask, 0.1, 1e-12);
      found = true;
    }
  EXPECT_TRUE(found);
  // monotone beyond threshold per head
  for (int h = 0; h < 2; ++h) {
    double prev = 2.0;
    for (const auto& p : curves)
      if (p.head == h && p.distance >= bias[h]) {
        EXPECT_LE(p.mask, prev);
        prev = p.mask;
      }
  }
  EXPECT_THROW(dump_decay_curves(scale, bias, 0.01, 4.0, 0.0), ContractError);
}

TEST(MaskSuite, SelfcheckProperties) {
  Rng rng(47);
  for (const auto& r : run_mask_checks(rng)) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}
