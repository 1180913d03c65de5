#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dualmod/afm.hpp"
#include "dualmod/gradcheck.hpp"
#include "dualmod/loss_metrics.hpp"
#include "dualmod/rng.hpp"
#include "dualmod/sma.hpp"

namespace dualmod {

enum class Fault { None, SoftplusGradSign };

struct CheckResult {
  std::string name;
  bool pass = true;
  std::string detail;
};

// Reference GAME: enumerate the 2^L x 2^L regions and test each cell center
// and point against the region's half-open interval. Independent of the
// index-binning route in game_level.
inline double game_bruteforce(const DensityMap& pred, int width, int height,
                              const std::vector<Point>& points, int level) {
  const int g = 1 << level;
  const std::size_t h = pred.h(), w = pred.w();
  const int f = pred.downsample;
  double err = 0.0;
  for (int gy = 0; gy < g; ++gy) {
    const double y_lo = static_cast<double>(gy) * height / g;
    const double y_hi = static_cast<double>(gy + 1) * height / g;
    for (int gx = 0; gx < g; ++gx) {
      const double x_lo = static_cast<double>(gx) * width / g;
      const double x_hi = static_cast<double>(gx + 1) * width / g;
      auto inside = [&](double x, double y) {
        const bool x_ok = (gx == 0 || x >= x_lo) && (gx == g - 1 || x < x_hi);
        const bool y_ok = (gy == 0 || y >= y_lo) && (gy == g - 1 || y < y_hi);
        return x_ok && y_ok;
      };
      double pc = 0.0, gc = 0.0;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
          if (inside((static_cast<double>(c) + 0.5) * f, (static_cast<double>(r) + 0.5) * f))
            pc += pred.values[r * w + c];
      for (const Point& p : points)
        if (inside(p.x, p.y)) gc += 1.0;
      err += std::abs(pc - gc);
    }
  }
  return err;
}

namespace detail {

struct FaultGuard {
  double prev;
  explicit FaultGuard(Fault f) : prev(fault::softplus_grad_sign) {
    if (f == Fault::SoftplusGradSign) fault::softplus_grad_sign = -1.0;
  }
  ~FaultGuard() { fault::softplus_grad_sign = prev; }
};

inline Tensor rand_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline CheckResult grad_case(const std::string& name, const std::function<Tensor()>& f,
                             std::vector<Parameter> params) {
  GradCheckResult r = finite_diff_check(f, std::move(params));
  CheckResult c{"grad:" + name, r.pass, r.pass ? "" : (r.failure.empty() ? r.worst : r.failure)};
  return c;
}

}  // namespace detail

// Finite-difference oracle over every differentiable op at random points.
inline std::vector<CheckResult> run_gradient_checks(Rng& rng) {
  using detail::grad_case;
  using detail::rand_tensor;
  std::vector<CheckResult> out;

  auto unary_case = [&](const std::string& name, auto op, double lo, double hi) {
    Parameter p("p", rand_tensor(rng, Shape{2, 3}, lo, hi));
    Tensor weights = rand_tensor(rng, Shape{2, 3});
    out.push_back(grad_case(name, [=]() { return sum_all(mul(op(p.value()), weights)); }, {p}));
  };
  unary_case("relu", [](const Tensor& x) { return relu(x); }, 0.1, 1.5);
  unary_case("relu_neg", [](const Tensor& x) { return relu(x); }, -1.5, -0.1);
  unary_case("leaky_relu", [](const Tensor& x) { return leaky_relu(x, 0.01); }, -2.0, -0.1);
  unary_case("sigmoid", [](const Tensor& x) { return sigmoid(x); }, -2.0, 2.0);
  unary_case("softplus", [](const Tensor& x) { return softplus(x); }, -2.0, 2.0);
  unary_case("exp", [](const Tensor& x) { return dualmod::exp(x); }, -1.0, 1.0);
  unary_case("log", [](const Tensor& x) { return dualmod::log(x); }, 0.4, 2.0);
  unary_case("abs", [](const Tensor& x) { return dualmod::abs(x); }, 0.2, 1.0);
  unary_case("add_const", [](const Tensor& x) { return add_const(x, 1.7); }, -1.0, 1.0);
  unary_case("mul_const", [](const Tensor& x) { return mul_const(x, -2.3); }, -1.0, 1.0);

  {
    Parameter a("a", rand_tensor(rng, Shape{3, 4}));
    Parameter b("b", rand_tensor(rng, Shape{4, 2}));
    out.push_back(grad_case("matmul", [=]() { return sum_all(matmul(a.value(), b.value())); }, {a, b}));
  }
  {
    Parameter a("a", rand_tensor(rng, Shape{2, 3}));
    Parameter b("b", rand_tensor(rng, Shape{2, 3}));
    Tensor w = rand_tensor(rng, Shape{2, 3});
    out.push_back(grad_case("add", [=]() { return sum_all(mul(add(a.value(), b.value()), w)); }, {a, b}));
    out.push_back(grad_case("sub", [=]() { return sum_all(mul(sub(a.value(), b.value()), w)); }, {a, b}));
    out.push_back(grad_case("mul", [=]() { return sum_all(mul(mul(a.value(), b.value()), w)); }, {a, b}));
  }
  {
    Parameter m("m", rand_tensor(rng, Shape{3, 4}));
    Parameter b("bias", rand_tensor(rng, Shape{4}));
    Tensor w = rand_tensor(rng, Shape{3, 4});
    out.push_back(
        grad_case("add_row_bias", [=]() { return sum_all(mul(add_row_bias(m.value(), b.value()), w)); },
                  {m, b}));
  }
  {
    Parameter t("t", rand_tensor(rng, Shape{2, 3}));
    Parameter s("s", rand_tensor(rng, Shape{1}, 0.3, 0.8));
    Tensor w = rand_tensor(rng, Shape{2, 3});
    out.push_back(grad_case(
        "sub_scalar_t", [=]() { return sum_all(mul(sub_scalar_t(t.value(), s.value()), w)); }, {t, s}));
    out.push_back(grad_case(
        "mul_scalar_t", [=]() { return sum_all(mul(mul_scalar_t(t.value(), s.value()), w)); }, {t, s}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{3, 5}));
    Tensor w = rand_tensor(rng, Shape{3, 5});
    out.push_back(
        grad_case("softmax_rows", [=]() { return sum_all(mul(softmax_rows(x.value()), w)); }, {x}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{3, 6}));
    Parameter g("gain", rand_tensor(rng, Shape{6}, 0.5, 1.5));
    Parameter b("bias", rand_tensor(rng, Shape{6}));
    Tensor w = rand_tensor(rng, Shape{3, 6});
    out.push_back(grad_case(
        "layer_norm", [=]() { return sum_all(mul(layer_norm(x.value(), g.value(), b.value()), w)); },
        {x, g, b}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{2, 5, 5}));
    Parameter k("k", rand_tensor(rng, Shape{3, 2, 3, 3}));
    Parameter b("b", rand_tensor(rng, Shape{3}));
    out.push_back(grad_case(
        "conv2d_3x3", [=]() { return sum_all(conv2d(x.value(), k.value(), b.value(), 1)); }, {x, k, b}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{3, 4, 4}));
    Parameter k("k", rand_tensor(rng, Shape{2, 3, 1, 1}));
    Parameter b("b", rand_tensor(rng, Shape{2}));
    out.push_back(grad_case(
        "conv2d_1x1", [=]() { return sum_all(conv2d(x.value(), k.value(), b.value(), 0)); }, {x, k, b}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{2, 5, 5}));
    out.push_back(grad_case("maxpool2", [=]() { return sum_all(maxpool2(x.value())); }, {x}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{3, 4, 5}));
    Tensor w = rand_tensor(rng, Shape{3, 1, 1});
    out.push_back(
        grad_case("global_avg_pool", [=]() { return sum_all(mul(global_avg_pool(x.value()), w)); }, {x}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{3, 4}));
    Tensor w = rand_tensor(rng, Shape{4, 3});
    out.push_back(
        grad_case("transpose2d", [=]() { return sum_all(mul(transpose2d(x.value()), w)); }, {x}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{3, 6}));
    Tensor w = rand_tensor(rng, Shape{3, 2});
    out.push_back(
        grad_case("slice_cols", [=]() { return sum_all(mul(slice_cols(x.value(), 2, 4), w)); }, {x}));
  }
  {
    Parameter a("a", rand_tensor(rng, Shape{3, 2}));
    Parameter b("b", rand_tensor(rng, Shape{3, 3}));
    Tensor w = rand_tensor(rng, Shape{3, 5});
    out.push_back(grad_case(
        "concat_cols", [=]() { return sum_all(mul(concat_cols({a.value(), b.value()}), w)); }, {a, b}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{2, 3, 4}));
    Tensor w = rand_tensor(rng, Shape{12, 2});
    out.push_back(
        grad_case("chw_to_tokens", [=]() { return sum_all(mul(chw_to_tokens(x.value()), w)); }, {x}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{12, 3}));
    Tensor w = rand_tensor(rng, Shape{3, 3, 4});
    out.push_back(grad_case(
        "tokens_to_chw", [=]() { return sum_all(mul(tokens_to_chw(x.value(), 3, 4), w)); }, {x}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{1, 3, 3}));
    Tensor w = rand_tensor(rng, Shape{3, 3, 3});
    out.push_back(grad_case(
        "replicate_channels", [=]() { return sum_all(mul(replicate_channels(x.value(), 3), w)); }, {x}));
  }
  {
    Parameter x("x", rand_tensor(rng, Shape{5}));
    out.push_back(grad_case("index_scalar", [=]() { return index_scalar(x.value(), 3); }, {x}));
    Tensor w = rand_tensor(rng, Shape{5, 1});
    out.push_back(
        grad_case("reshape", [=]() { return sum_all(mul(reshape(x.value(), Shape{5, 1}), w)); }, {x}));
  }

  // decay mask w.r.t. raw per-head parameters
  {
    Parameter raw_scale("raw_scale", rand_tensor(rng, Shape{1}, -1.0, 1.0));
    Parameter raw_bias("raw_bias", rand_tensor(rng, Shape{1}, -0.5, 1.0));
    Tensor s = rand_tensor(rng, Shape{6, 6}, 0.0, 5.0);
    Tensor w = rand_tensor(rng, Shape{6, 6});
    out.push_back(grad_case(
        "decay_mask",
        [=]() {
          Tensor mask = decay_mask(s, sigmoid(raw_scale.value()), softplus(raw_bias.value()), 0.01);
          return sum_all(mul(mask, w));
        },
        {raw_scale, raw_bias}));
  }
  // attention w.r.t. Q, K, V
  {
    Parameter q("q", rand_tensor(rng, Shape{4, 3}));
    Parameter k("k", rand_tensor(rng, Shape{4, 3}));
    Parameter v("v", rand_tensor(rng, Shape{4, 3}));
    Tensor m = rand_tensor(rng, Shape{4, 4}, 0.2, 1.5);
    Tensor w = rand_tensor(rng, Shape{4, 3});
    out.push_back(grad_case(
        "modulated_attention",
        [=]() { return sum_all(mul(modulated_attention(q.value(), k.value(), v.value(), m), w)); },
        {q, k, v}));
  }
  // decay parameters through a full encoder layer (masked attention stack)
  {
    ParamStore store;
    Rng init(rng.next_u64());
    EncoderLayer layer(store, "enc", 8, 2, init);
    DecayParams decay = make_decay_params(store, "decay", 2);
    // randomize the thresholds so no grid distance sits exactly at a kink
    for (std::size_t i = 0; i < decay.bias.size(); ++i)
      decay.bias.value()[i] += rng.uniform(0.01, 0.3);
    Tensor x = rand_tensor(rng, Shape{9, 8});
    Tensor s = pairwise_distance(TokenGrid(3, 3));
    Tensor w = rand_tensor(rng, Shape{9, 8});
    std::vector<Parameter> params;
    for (const Parameter& p : store.items()) params.push_back(p);
    out.push_back(grad_case(
        "encoder_layer",
        [=]() {
          auto [es, eb] = effective_params(decay);
          auto masks = build_head_masks(s, es, eb, 0.01, MaskMode::MultiplyLogits);
          return sum_all(mul(layer.forward(x, masks, MaskMode::MultiplyLogits), w));
        },
        params));
  }
  // fusion gate parameters and both feature branches
  {
    ParamStore store;
    Rng init(rng.next_u64());
    FusionGate gate(store, "gate", 8, 4, init);
    Parameter frgb("rgb", rand_tensor(rng, Shape{8, 3, 3}));
    Parameter fth("thermal", rand_tensor(rng, Shape{8, 3, 3}));
    Tensor w = rand_tensor(rng, Shape{8, 3, 3});
    std::vector<Parameter> params{frgb, fth};
    for (const Parameter& p : store.items()) params.push_back(p);
    out.push_back(grad_case(
        "fusion_gate",
        [=]() {
          FeaturePair pair(frgb.value(), fth.value());
          Tensor fw = fusion_weight(pair, gate);
          return sum_all(mul(fuse(pair, fw), w));
        },
        params));
  }
  // counting loss w.r.t. the density map
  {
    Parameter d("density", rand_tensor(rng, Shape{1, 6, 6}, 0.01, 0.4));
    std::vector<Point> pts{{7.3, 11.2}, {30.1, 18.9}, {21.4, 40.0}};
    out.push_back(
        grad_case("bayesian_loss", [=]() { return bayesian_loss(d.value(), pts, 8.0, 8); }, {d}));
  }
  return out;
}

// Mask fidelity against the scalar power-law formula, plus the threshold,
// monotonicity, positivity, symmetry and vanilla-limit properties.
inline std::vector<CheckResult> run_mask_checks(Rng& rng) {
  std::vector<CheckResult> out;

  {
    CheckResult c{"mask:scalar_formula", true, ""};
    for (int i = 0; i < 1000 && c.pass; ++i) {
      const double raw_scale = rng.uniform(-6.0, 20.0);
      const double raw_bias = rng.uniform(-4.0, 4.0);
      const double d = rng.uniform(0.0, 64.0);
      const double es = 1.0 / (1.0 + std::exp(-raw_scale));
      const double eb = std::log1p(std::exp(-std::abs(raw_bias))) + (raw_bias > 0 ? raw_bias : 0.0);
      Tensor s(Shape{1, 1}, std::vector<double>{d});
      const double got = decay_mask(s, es, eb, 0.01)[0];
      const double shifted = d - eb;
      const double sp = shifted > 0.0 ? shifted : 0.01 * shifted;
      const double want = std::pow(es, sp);
      if (std::abs(got - want) > 1e-12 * std::max(1.0, std::abs(want))) {
        c.pass = false;
        c.detail = "mismatch at scale=" + std::to_string(es) + " bias=" + std::to_string(eb) +
                   " d=" + std::to_string(d);
      }
      if (!(got > 0.0)) {
        c.pass = false;
        c.detail = "mask not positive";
      }
    }
    out.push_back(c);
  }
  {
    CheckResult c{"mask:threshold_identity", true, ""};
    for (int i = 0; i < 100 && c.pass; ++i) {
      const double eb = rng.uniform(0.1, 5.0);
      const double es = rng.uniform(0.05, 0.95);
      Tensor s(Shape{1, 1}, std::vector<double>{eb});
      if (decay_mask(s, es, eb, 0.01)[0] != 1.0) {
        c.pass = false;
        c.detail = "mask at threshold distance differs from 1";
      }
    }
    out.push_back(c);
  }
  {
    CheckResult c{"mask:monotone_beyond_threshold", true, ""};
    for (int i = 0; i < 100 && c.pass; ++i) {
      const double eb = rng.uniform(0.1, 3.0);
      const double es = rng.uniform(0.05, 0.95);
      double prev = 2.0;
      for (int k = 0; k <= 40 && c.pass; ++k) {
        const double d = eb + k * 0.25;
        Tensor s(Shape{1, 1}, std::vector<double>{d});
        const double m = decay_mask(s, es, eb, 0.01)[0];
        if (m > prev) {
          c.pass = false;
          c.detail = "mask increases with distance beyond threshold";
        }
        prev = m;
      }
    }
    out.push_back(c);
  }
  {
    CheckResult c{"mask:symmetry", true, ""};
    Tensor s = pairwise_distance(TokenGrid(4, 5));
    Tensor m = decay_mask(s, 0.35, 1.2, 0.01);
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t j = 0; j < 20; ++j)
        if (m(i, j) != m(j, i)) {
          c.pass = false;
          c.detail = "mask asymmetric";
        }
    out.push_back(c);
  }
  {
    CheckResult c{"mask:vanilla_limit", true, ""};
    const double es = 1.0 / (1.0 + std::exp(-20.0));
    double max_dev = 0.0;
    for (double d = 0.0; d <= 101.0; d += 0.5) {
      Tensor s(Shape{1, 1}, std::vector<double>{d});
      max_dev = std::max(max_dev, std::abs(decay_mask(s, es, 1.0, 0.01)[0] - 1.0));
    }
    if (max_dev >= 1e-6) {
      c.pass = false;
      c.detail = "mask deviates from 1 by " + std::to_string(max_dev);
    }
    Tensor s = pairwise_distance(TokenGrid(3, 3));
    Tensor q = detail::rand_tensor(rng, Shape{9, 4});
    Tensor k = detail::rand_tensor(rng, Shape{9, 4});
    Tensor v = detail::rand_tensor(rng, Shape{9, 4});
    Tensor m = decay_mask(s, es, 1.0, 0.01);
    Tensor with_mask = modulated_attention(q, k, v, m);
    Tensor without = vanilla_attention(q, k, v);
    for (std::size_t i = 0; i < with_mask.size(); ++i)
      if (std::abs(with_mask[i] - without[i]) >= 1e-5) {
        c.pass = false;
        c.detail = "attention deviates from the unmasked baseline";
      }
    out.push_back(c);
  }
  return out;
}

// GAME against the region-enumeration oracle, metric identities, and the
// counting-loss contracts.
inline std::vector<CheckResult> run_metric_checks(Rng& rng) {
  std::vector<CheckResult> out;

  {
    CheckResult c{"metric:game_oracle", true, ""};
    for (int inst = 0; inst < 200 && c.pass; ++inst) {
      const int f = rng.uniform() < 0.5 ? 4 : 8;
      const std::size_t h = 2 + rng.uniform_int(9);
      const std::size_t w = 2 + rng.uniform_int(9);
      const int height = static_cast<int>(h) * f - static_cast<int>(rng.uniform_int(f));
      const int width = static_cast<int>(w) * f - static_cast<int>(rng.uniform_int(f));
      DensityMap dm{detail::rand_tensor(rng, Shape{1, h, w}, 0.0, 0.5), f};
      std::vector<Point> pts;
      const int n_pts = static_cast<int>(rng.uniform_int(11));
      for (int i = 0; i < n_pts; ++i)
        pts.push_back({rng.uniform(0.0, width), rng.uniform(0.0, height)});
      double prev = -1.0;
      for (int l = 0; l < 4 && c.pass; ++l) {
        const double got = game_level(dm, width, height, pts, l);
        const double want = game_bruteforce(dm, width, height, pts, l);
        if (std::abs(got - want) > 1e-9) {
          c.pass = false;
          c.detail = "pipeline GAME(" + std::to_string(l) + ") != oracle";
        }
        if (l > 0 && got < prev - 1e-12) {
          c.pass = false;
          c.detail = "GAME decreased with level";
        }
        prev = got;
      }
      const double game0 = game_level(dm, width, height, pts, 0);
      const double count_err = std::abs(dm.count() - static_cast<double>(pts.size()));
      if (std::abs(game0 - count_err) > 1e-9) {
        c.pass = false;
        c.detail = "GAME(0) != absolute count error";
      }
    }
    out.push_back(c);
  }
  {
    // 4x4 image, f=2 density grid = the four quadrants
    CheckResult c{"metric:game_hand_example", true, ""};
    DensityMap dm{Tensor(Shape{1, 2, 2}, std::vector<double>{2.0, 0.0, 1.0, 1.0}), 2};
    std::vector<Point> pts{{1.0, 1.0}, {3.0, 1.0}, {1.0, 3.0}, {3.0, 3.0}};
    if (game_level(dm, 4, 4, pts, 1) != 2.0 || game_level(dm, 4, 4, pts, 0) != 0.0) {
      c.pass = false;
      c.detail = "quadrant example does not reproduce";
    }
    out.push_back(c);
  }
  {
    CheckResult c{"metric:rmse", true, ""};
    if (rmse({3.0}, {0.0}) != 3.0) c.pass = false;
    if (rmse({1.0, 2.0}, {1.0, 2.0}) != 0.0) c.pass = false;
    if (std::abs(rmse({3.0, 4.0}, {0.0, 0.0}) - std::sqrt(12.5)) > 1e-12) c.pass = false;
    if (!c.pass) c.detail = "hand rmse values do not reproduce";
    out.push_back(c);
  }
  {
    CheckResult c{"metric:posterior_normalization", true, ""};
    for (int inst = 0; inst < 50 && c.pass; ++inst) {
      const std::size_t h = 2 + rng.uniform_int(6), w = 2 + rng.uniform_int(6);
      const int m = 1 + static_cast<int>(rng.uniform_int(6));
      std::vector<Point> pts;
      for (int i = 0; i < m; ++i) pts.push_back({rng.uniform(0.0, w * 8.0), rng.uniform(0.0, h * 8.0)});
      auto p = posterior_weights(h, w, 8, pts, 8.0);
      for (std::size_t cell = 0; cell < h * w && c.pass; ++cell) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += p[i * h * w + cell];
        if (std::abs(s - 1.0) > 1e-9) {
          c.pass = false;
          c.detail = "posterior weights at a cell do not sum to 1";
        }
      }
    }
    out.push_back(c);
  }
  {
    CheckResult c{"metric:bayesian_contracts", true, ""};
    // single annotation: loss == |1 - sum(density)|
    Tensor d = detail::rand_tensor(rng, Shape{1, 4, 4}, 0.0, 0.2);
    std::vector<Point> one{{13.0, 17.0}};
    double sum = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) sum += d[i];
    if (std::abs(bayesian_loss(d, one, 8.0, 8)[0] - std::abs(1.0 - sum)) > 1e-12) {
      c.pass = false;
      c.detail = "single-annotation loss differs from |1 - sum|";
    }
    // empty scene, penalty off
    if (bayesian_loss(d, {}, 8.0, 8)[0] != 0.0) {
      c.pass = false;
      c.detail = "empty-scene loss is not 0";
    }
    // two far-separated points with unit masses at their cells
    Tensor d2(Shape{1, 8, 8});
    std::vector<Point> two{{12.0, 12.0}, {52.0, 52.0}};  // cells (1,1) and (6,6) at f=8
    d2(0, 1, 1) = 1.0;
    d2(0, 6, 6) = 1.0;
    if (bayesian_loss(d2, two, 6.0, 8)[0] >= 1e-6) {
      c.pass = false;
      c.detail = "far-separated unit-mass loss too large";
    }
    out.push_back(c);
  }
  return out;
}

// Release gate: every suite the CLI selfcheck command runs.
inline std::vector<CheckResult> run_selfcheck(Fault fault = Fault::None) {
  detail::FaultGuard guard(fault);
  Rng rng(0x5eedULL);
  std::vector<CheckResult> out;
  auto grads = run_gradient_checks(rng);
  out.insert(out.end(), grads.begin(), grads.end());
  auto masks = run_mask_checks(rng);
  out.insert(out.end(), masks.begin(), masks.end());
  auto metrics = run_metric_checks(rng);
  out.insert(out.end(), metrics.begin(), metrics.end());
  return out;
}

inline const CheckResult* first_failure(const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results)
    if (!r.pass) return &r;
  return nullptr;
}

}  // namespace dualmod
