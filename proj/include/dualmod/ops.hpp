#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "dualmod/tensor.hpp"

namespace dualmod {

namespace fault {
// Test-only fault injection point: the self-check suite must detect a wrong
// softplus derivative when a fixture flips this sign. Always 1.0 in real use.
inline double softplus_grad_sign = 1.0;
}  // namespace fault

namespace detail {

inline std::shared_ptr<Node> record(Tensor& out, std::vector<Tensor> parents, const char* op) {
  if (!grad_enabled()) return nullptr;
  bool any = false;
  for (const Tensor& p : parents)
    if (p.requires_grad()) {
      any = true;
      break;
    }
  if (!any) return nullptr;
  out.set_requires_grad(true);
  auto n = std::make_shared<Node>();
  n->op = op;
  n->parents = std::move(parents);
  n->out_grad = out.grad_buffer();
  out.node = n;
  return n;
}

inline std::shared_ptr<std::vector<double>> grad_or_null(const Tensor& t) {
  return t.requires_grad() ? t.grad_buffer() : nullptr;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) + " tensor, got " +
                         shape_str(t.shape()));
}

inline void require_scalar(const Tensor& t, const char* op) {
  if (t.size() != 1)
    throw DimensionError(std::string(op) + ": expected scalar, got " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out(a.shape());
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
  if (auto node = detail::record(out, {a, b}, "add")) {
    auto ga = detail::grad_or_null(a);
    auto gb = detail::grad_or_null(b);
    auto go = node->out_grad;
    node->backward = [ga, gb, go, n]() {
      if (ga)
        for (std::size_t i = 0; i < n; ++i) (*ga)[i] += (*go)[i];
      if (gb)
        for (std::size_t i = 0; i < n; ++i) (*gb)[i] += (*go)[i];
    };
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i];
  if (auto node = detail::record(out, {a, b}, "sub")) {
    auto ga = detail::grad_or_null(a);
    auto gb = detail::grad_or_null(b);
    auto go = node->out_grad;
    node->backward = [ga, gb, go, n]() {
      if (ga)
        for (std::size_t i = 0; i < n; ++i) (*ga)[i] += (*go)[i];
      if (gb)
        for (std::size_t i = 0; i < n; ++i) (*gb)[i] -= (*go)[i];
    };
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
  if (auto node = detail::record(out, {a, b}, "mul")) {
    auto ga = detail::grad_or_null(a);
    auto gb = detail::grad_or_null(b);
    auto ad = a.data_buffer();
    auto bd = b.data_buffer();
    auto go = node->out_grad;
    node->backward = [ga, gb, ad, bd, go, n]() {
      if (ga)
        for (std::size_t i = 0; i < n; ++i) (*ga)[i] += (*go)[i] * (*bd)[i];
      if (gb)
        for (std::size_t i = 0; i < n; ++i) (*gb)[i] += (*go)[i] * (*ad)[i];
    };
  }
  return out;
}

inline Tensor add_const(const Tensor& x, double c) {
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] + c;
  if (auto node = detail::record(out, {x}, "add_const")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    node->backward = [gx, go, n]() {
      for (std::size_t i = 0; i < n; ++i) (*gx)[i] += (*go)[i];
    };
  }
  return out;
}

inline Tensor mul_const(const Tensor& x, double c) {
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] * c;
  if (auto node = detail::record(out, {x}, "mul_const")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    node->backward = [gx, go, n, c]() {
      for (std::size_t i = 0; i < n; ++i) (*gx)[i] += (*go)[i] * c;
    };
  }
  return out;
}

inline Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (auto node = detail::record(out, {x}, "relu")) {
    auto gx = x.grad_buffer();
    auto xd = x.data_buffer();
    auto go = node->out_grad;
    node->backward = [gx, xd, go, n]() {
      for (std::size_t i = 0; i < n; ++i)
        if ((*xd)[i] > 0.0) (*gx)[i] += (*go)[i];
    };
  }
  return out;
}

// Derivative at exactly 0 is the slope (consistent subgradient choice).
inline Tensor leaky_relu(const Tensor& x, double slope = 0.01) {
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  if (auto node = detail::record(out, {x}, "leaky_relu")) {
    auto gx = x.grad_buffer();
    auto xd = x.data_buffer();
    auto go = node->out_grad;
    node->backward = [gx, xd, go, n, slope]() {
      for (std::size_t i = 0; i < n; ++i) (*gx)[i] += (*go)[i] * ((*xd)[i] > 0.0 ? 1.0 : slope);
    };
  }
  return out;
}

inline Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = xv[i];
    ov[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  if (auto node = detail::record(out, {x}, "sigmoid")) {
    auto gx = x.grad_buffer();
    auto od = out.data_buffer();
    auto go = node->out_grad;
    node->backward = [gx, od, go, n]() {
      for (std::size_t i = 0; i < n; ++i) {
        const double y = (*od)[i];
        (*gx)[i] += (*go)[i] * y * (1.0 - y);
      }
    };
  }
  return out;
}

inline Tensor softplus(const Tensor& x) {
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = xv[i];
    ov[i] = (v > 0.0 ? v : 0.0) + std::log1p(std::exp(-std::abs(v)));
  }
  if (auto node = detail::record(out, {x}, "softplus")) {
    auto gx = x.grad_buffer();
    auto xd = x.data_buffer();
    auto go = node->out_grad;
    node->backward = [gx, xd, go, n]() {
      const double sign = fault::softplus_grad_sign;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = (*xd)[i];
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        (*gx)[i] += sign * (*go)[i] * s;
      }
    };
  }
  return out;
}

inline Tensor exp(const Tensor& x) {
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = std::exp(xv[i]);
  if (auto node = detail::record(out, {x}, "exp")) {
    auto gx = x.grad_buffer();
    auto od = out.data_buffer();
    auto go = node->out_grad;
    node->backward = [gx, od, go, n]() {
      for (std::size_t i = 0; i < n; ++i) (*gx)[i] += (*go)[i] * (*od)[i];
    };
  }
  return out;
}

inline Tensor log(const Tensor& x) {
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (xv[i] <= 0.0)
      throw ContractError("log: input must be strictly positive, got " + std::to_string(xv[i]));
    ov[i] = std::log(xv[i]);
  }
  if (auto node = detail::record(out, {x}, "log")) {
    auto gx = x.grad_buffer();
    auto xd = x.data_buffer();
    auto go = node->out_grad;
    node->backward = [gx, xd, go, n]() {
      for (std::size_t i = 0; i < n; ++i) (*gx)[i] += (*go)[i] / (*xd)[i];
    };
  }
  return out;
}

// Subgradient at 0 is 0.
inline Tensor abs(const Tensor& x) {
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = std::abs(xv[i]);
  if (auto node = detail::record(out, {x}, "abs")) {
    auto gx = x.grad_buffer();
    auto xd = x.data_buffer();
    auto go = node->out_grad;
    node->backward = [gx, xd, go, n]() {
      for (std::size_t i = 0; i < n; ++i) {
        const double v = (*xd)[i];
        if (v > 0.0)
          (*gx)[i] += (*go)[i];
        else if (v < 0.0)
          (*gx)[i] -= (*go)[i];
      }
    };
  }
  return out;
}

enum class Activation { Relu, LeakyRelu, Sigmoid, Softplus };

inline Tensor activation(const Tensor& x, Activation kind, double leaky_slope = 0.01) {
  switch (kind) {
    case Activation::Relu:
      return relu(x);
    case Activation::LeakyRelu:
      return leaky_relu(x, leaky_slope);
    case Activation::Sigmoid:
      return sigmoid(x);
    case Activation::Softplus:
      return softplus(x);
  }
  throw ContractError("activation: unknown kind");
}

// ---------------------------------------------------------------------------
// Broadcast ops (the only broadcasting supported: bias add and scalar-tensor)
// ---------------------------------------------------------------------------

// out_i = x_i - s, with s a [1] tensor.
inline Tensor sub_scalar_t(const Tensor& x, const Tensor& s) {
  detail::require_scalar(s, "sub_scalar_t");
  Tensor out(x.shape());
  const double sv = s[0];
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] - sv;
  if (auto node = detail::record(out, {x, s}, "sub_scalar_t")) {
    auto gx = detail::grad_or_null(x);
    auto gs = detail::grad_or_null(s);
    auto go = node->out_grad;
    node->backward = [gx, gs, go, n]() {
      if (gx)
        for (std::size_t i = 0; i < n; ++i) (*gx)[i] += (*go)[i];
      if (gs) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += (*go)[i];
        (*gs)[0] -= acc;
      }
    };
  }
  return out;
}

// out_i = x_i * s, with s a [1] tensor.
inline Tensor mul_scalar_t(const Tensor& x, const Tensor& s) {
  detail::require_scalar(s, "mul_scalar_t");
  Tensor out(x.shape());
  const double sv = s[0];
  const double* xv = x.data();
  double* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] * sv;
  if (auto node = detail::record(out, {x, s}, "mul_scalar_t")) {
    auto gx = detail::grad_or_null(x);
    auto gs = detail::grad_or_null(s);
    auto xd = x.data_buffer();
    auto go = node->out_grad;
    node->backward = [gx, gs, xd, go, n, sv]() {
      if (gx)
        for (std::size_t i = 0; i < n; ++i) (*gx)[i] += (*go)[i] * sv;
      if (gs) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += (*go)[i] * (*xd)[i];
        (*gs)[0] += acc;
      }
    };
  }
  return out;
}

// out[i][j] = m[i][j] + b[j]
inline Tensor add_row_bias(const Tensor& m, const Tensor& b) {
  detail::require_rank(m, 2, "add_row_bias");
  detail::require_rank(b, 1, "add_row_bias");
  if (m.dim(1) != b.dim(0))
    throw DimensionError("add_row_bias: bias " + shape_str(b.shape()) + " does not match matrix " +
                         shape_str(m.shape()));
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Tensor out(m.shape());
  const double* mv = m.data();
  const double* bv = b.data();
  double* ov = out.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) ov[i * cols + j] = mv[i * cols + j] + bv[j];
  if (auto node = detail::record(out, {m, b}, "add_row_bias")) {
    auto gm = detail::grad_or_null(m);
    auto gb = detail::grad_or_null(b);
    auto go = node->out_grad;
    node->backward = [gm, gb, go, rows, cols]() {
      if (gm)
        for (std::size_t i = 0; i < rows * cols; ++i) (*gm)[i] += (*go)[i];
      if (gb)
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) (*gb)[j] += (*go)[i * cols + j];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
  Tensor out(std::move(new_shape), std::vector<double>(x.values()));
  if (auto node = detail::record(out, {x}, "reshape")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    const std::size_t n = x.size();
    node->backward = [gx, go, n]() {
      for (std::size_t i = 0; i < n; ++i) (*gx)[i] += (*go)[i];
    };
  }
  return out;
}

inline Tensor transpose2d(const Tensor& x) {
  detail::require_rank(x, 2, "transpose2d");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out(Shape{c, r});
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[j * r + i] = xv[i * c + j];
  if (auto node = detail::record(out, {x}, "transpose2d")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    node->backward = [gx, go, r, c]() {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += (*go)[j * r + i];
    };
  }
  return out;
}

inline Tensor slice_cols(const Tensor& x, std::size_t lo, std::size_t hi) {
  detail::require_rank(x, 2, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (lo >= hi || hi > c)
    throw DimensionError("slice_cols: range [" + std::to_string(lo) + "," + std::to_string(hi) +
                         ") invalid for " + shape_str(x.shape()));
  const std::size_t w = hi - lo;
  Tensor out(Shape{r, w});
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) ov[i * w + j] = xv[i * c + lo + j];
  if (auto node = detail::record(out, {x}, "slice_cols")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    node->backward = [gx, go, r, c, w, lo]() {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) (*gx)[i * c + lo + j] += (*go)[i * w + j];
    };
  }
  return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: empty input");
  const std::size_t r = parts[0].dim(0);
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    detail::require_rank(p, 2, "concat_cols");
    if (p.dim(0) != r)
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    total += p.dim(1);
  }
  Tensor out(Shape{r, total});
  double* ov = out.data();
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.dim(1);
    const double* pv = p.data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) ov[i * total + off + j] = pv[i * w + j];
    off += w;
  }
  if (auto node = detail::record(out, parts, "concat_cols")) {
    std::vector<std::shared_ptr<std::vector<double>>> gps;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
      gps.push_back(detail::grad_or_null(p));
      widths.push_back(p.dim(1));
    }
    auto go = node->out_grad;
    node->backward = [gps, widths, go, r, total]() {
      std::size_t off2 = 0;
      for (std::size_t k = 0; k < gps.size(); ++k) {
        const std::size_t w = widths[k];
        if (gps[k])
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) (*gps[k])[i * w + j] += (*go)[i * total + off2 + j];
        off2 += w;
      }
    };
  }
  return out;
}

// Picks one element as a [1] tensor.
inline Tensor index_scalar(const Tensor& x, std::size_t i) {
  if (i >= x.size())
    throw DimensionError("index_scalar: index " + std::to_string(i) + " out of range for " +
                         shape_str(x.shape()));
  Tensor out = Tensor::scalar(x[i]);
  if (auto node = detail::record(out, {x}, "index_scalar")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    node->backward = [gx, go, i]() { (*gx)[i] += (*go)[0]; };
  }
  return out;
}

// [1 x H x W] -> [k x H x W]
inline Tensor replicate_channels(const Tensor& x, std::size_t k) {
  detail::require_rank(x, 3, "replicate_channels");
  if (x.dim(0) != 1)
    throw DimensionError("replicate_channels: expected single-channel input, got " + shape_str(x.shape()));
  const std::size_t hw = x.dim(1) * x.dim(2);
  Tensor out(Shape{k, x.dim(1), x.dim(2)});
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < hw; ++i) ov[c * hw + i] = xv[i];
  if (auto node = detail::record(out, {x}, "replicate_channels")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    node->backward = [gx, go, k, hw]() {
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t i = 0; i < hw; ++i) (*gx)[i] += (*go)[c * hw + i];
    };
  }
  return out;
}

// [C x h x w] -> [N x C] with token t = row*w + col (row-major grid order).
inline Tensor chw_to_tokens(const Tensor& x) {
  detail::require_rank(x, 3, "chw_to_tokens");
  const std::size_t C = x.dim(0), h = x.dim(1), w = x.dim(2), N = h * w;
  Tensor out(Shape{N, C});
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < N; ++t) ov[t * C + c] = xv[c * N + t];
  if (auto node = detail::record(out, {x}, "chw_to_tokens")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    node->backward = [gx, go, C, N]() {
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < N; ++t) (*gx)[c * N + t] += (*go)[t * C + c];
    };
  }
  return out;
}

// [N x D] -> [D x h x w] with N == h*w.
inline Tensor tokens_to_chw(const Tensor& x, std::size_t h, std::size_t w) {
  detail::require_rank(x, 2, "tokens_to_chw");
  const std::size_t N = x.dim(0), D = x.dim(1);
  if (N != h * w)
    throw DimensionError("tokens_to_chw: " + std::to_string(N) + " tokens cannot form a " +
                         std::to_string(h) + "x" + std::to_string(w) + " grid");
  Tensor out(Shape{D, h, w});
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t t = 0; t < N; ++t)
    for (std::size_t d = 0; d < D; ++d) ov[d * N + t] = xv[t * D + d];
  if (auto node = detail::record(out, {x}, "tokens_to_chw")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    node->backward = [gx, go, N, D]() {
      for (std::size_t t = 0; t < N; ++t)
        for (std::size_t d = 0; d < D; ++d) (*gx)[t * D + d] += (*go)[d * N + t];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and linear algebra
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  const double* xv = x.data();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) acc += xv[i];
  Tensor out = Tensor::scalar(acc);
  if (auto node = detail::record(out, {x}, "sum_all")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    node->backward = [gx, go, n]() {
      const double g = (*go)[0];
      for (std::size_t i = 0; i < n; ++i) (*gx)[i] += g;
    };
  }
  return out;
}

namespace detail {
// C[m x n] += A[m x k] * B[k x n]; cache-friendly i-k-j order.
inline void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                       std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x n] * B^T with B[k x n]  (i.e. C += A * B^T)
inline void matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                          std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double* brow = b + l * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[l] += acc;
    }
  }
}

// C[k x n] += A^T * B with A[m x k], B[m x n]
inline void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                          std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      double* crow = c + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  detail::matmul_acc(a.data(), b.data(), out.data(), m, k, n);
  if (auto node = detail::record(out, {a, b}, "matmul")) {
    auto ga = detail::grad_or_null(a);
    auto gb = detail::grad_or_null(b);
    auto ad = a.data_buffer();
    auto bd = b.data_buffer();
    auto go = node->out_grad;
    node->backward = [ga, gb, ad, bd, go, m, k, n]() {
      // dA += G * B^T ; dB += A^T * G
      if (ga) detail::matmul_nt_acc(go->data(), bd->data(), ga->data(), m, n, k);
      if (gb) detail::matmul_tn_acc(ad->data(), go->data(), gb->data(), m, k, n);
    };
  }
  return out;
}

// Row-wise softmax with max-subtraction stabilization.
inline Tensor softmax_rows(const Tensor& x) {
  detail::require_rank(x, 2, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* r = xv + i * cols;
    double* o = ov + i * cols;
    double mx = r[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      o[j] = std::exp(r[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < cols; ++j) o[j] /= sum;
  }
  if (auto node = detail::record(out, {x}, "softmax_rows")) {
    auto gx = x.grad_buffer();
    auto od = out.data_buffer();
    auto go = node->out_grad;
    node->backward = [gx, od, go, rows, cols]() {
      for (std::size_t i = 0; i < rows; ++i) {
        const double* y = od->data() + i * cols;
        const double* g = go->data() + i * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
        double* gr = gx->data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) gr[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return out;
}

// Per-row layer normalization with learnable gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  detail::require_rank(x, 2, "layer_norm");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (gain.shape() != Shape{cols} || bias.shape() != Shape{cols})
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match feature dim of " + shape_str(x.shape()));
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(rows * cols);
  auto invstd = std::make_shared<std::vector<double>>(rows);
  const double* xv = x.data();
  const double* gv = gain.data();
  const double* bv = bias.data();
  double* ov = out.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* r = xv + i * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += r[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = r[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*invstd)[i] = is;
    for (std::size_t j = 0; j < cols; ++j) {
      const double xh = (r[j] - mean) * is;
      (*xhat)[i * cols + j] = xh;
      ov[i * cols + j] = gv[j] * xh + bv[j];
    }
  }
  if (auto node = detail::record(out, {x, gain, bias}, "layer_norm")) {
    auto gx = detail::grad_or_null(x);
    auto gg = detail::grad_or_null(gain);
    auto gb = detail::grad_or_null(bias);
    auto gaind = gain.data_buffer();
    auto go = node->out_grad;
    node->backward = [gx, gg, gb, gaind, go, xhat, invstd, rows, cols]() {
      for (std::size_t i = 0; i < rows; ++i) {
        const double* g = go->data() + i * cols;
        const double* xh = xhat->data() + i * cols;
        if (gg)
          for (std::size_t j = 0; j < cols; ++j) (*gg)[j] += g[j] * xh[j];
        if (gb)
          for (std::size_t j = 0; j < cols; ++j) (*gb)[j] += g[j];
        if (gx) {
          // dL/dx = is/D * (D*gy - sum(gy) - xhat * sum(gy*xhat)), gy = g .* gain
          double sum_gy = 0.0, sum_gyxh = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gy = g[j] * (*gaind)[j];
            sum_gy += gy;
            sum_gyxh += gy * xh[j];
          }
          const double is = (*invstd)[i];
          const double dinv = 1.0 / static_cast<double>(cols);
          double* gr = gx->data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gy = g[j] * (*gaind)[j];
            gr[j] += is * (gy - dinv * sum_gy - xh[j] * dinv * sum_gyxh);
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution and pooling (cross-correlation semantics)
// ---------------------------------------------------------------------------

inline Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, int padding) {
  detail::require_rank(x, 3, "conv2d");
  if (kernels.rank() != 4)
    throw DimensionError("conv2d: kernels must be [O x C x kh x kw], got " + shape_str(kernels.shape()));
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = kernels.dim(0), KC = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
  if (KC != C)
    throw DimensionError("conv2d: input channels " + shape_str(x.shape()) + " do not match kernels " +
                         shape_str(kernels.shape()));
  if ((kh != 1 && kh != 3) || (kw != 1 && kw != 3))
    throw ContractError("conv2d: kernel sides must be 1 or 3, got " + shape_str(kernels.shape()));
  if (bias.shape() != Shape{O})
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match output channels " +
                         std::to_string(O));
  const long Ho = static_cast<long>(H) + 2 * padding - static_cast<long>(kh) + 1;
  const long Wo = static_cast<long>(W) + 2 * padding - static_cast<long>(kw) + 1;
  if (Ho < 1 || Wo < 1)
    throw DimensionError("conv2d: output would be empty for input " + shape_str(x.shape()));
  const std::size_t HO = static_cast<std::size_t>(Ho), WO = static_cast<std::size_t>(Wo);

  Tensor out(Shape{O, HO, WO});
  const double* xv = x.data();
  const double* kv = kernels.data();
  const double* bv = bias.data();
  double* ov = out.data();
  for (std::size_t o = 0; o < O; ++o) {
    double* plane = ov + o * HO * WO;
    const double bo = bv[o];
    for (std::size_t i = 0; i < HO * WO; ++i) plane[i] = bo;
    for (std::size_t c = 0; c < C; ++c) {
      const double* xplane = xv + c * H * W;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double wgt = kv[((o * C + c) * kh + ky) * kw + kx];
          if (wgt == 0.0) continue;
          for (std::size_t oy = 0; oy < HO; ++oy) {
            const long iy = static_cast<long>(oy + ky) - padding;
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            const double* xrow = xplane + iy * W;
            double* orow = plane + oy * WO;
            for (std::size_t ox = 0; ox < WO; ++ox) {
              const long ix = static_cast<long>(ox + kx) - padding;
              if (ix < 0 || ix >= static_cast<long>(W)) continue;
              orow[ox] += wgt * xrow[ix];
            }
          }
        }
      }
    }
  }

  if (auto node = detail::record(out, {x, kernels, bias}, "conv2d")) {
    auto gx = detail::grad_or_null(x);
    auto gk = detail::grad_or_null(kernels);
    auto gb = detail::grad_or_null(bias);
    auto xd = x.data_buffer();
    auto kd = kernels.data_buffer();
    auto go = node->out_grad;
    node->backward = [gx, gk, gb, xd, kd, go, C, H, W, O, kh, kw, HO, WO, padding]() {
      for (std::size_t o = 0; o < O; ++o) {
        const double* gplane = go->data() + o * HO * WO;
        if (gb) {
          double acc = 0.0;
          for (std::size_t i = 0; i < HO * WO; ++i) acc += gplane[i];
          (*gb)[o] += acc;
        }
        for (std::size_t c = 0; c < C; ++c) {
          const double* xplane = xd->data() + c * H * W;
          double* gxplane = gx ? gx->data() + c * H * W : nullptr;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::size_t widx = ((o * C + c) * kh + ky) * kw + kx;
              const double wgt = (*kd)[widx];
              double wacc = 0.0;
              for (std::size_t oy = 0; oy < HO; ++oy) {
                const long iy = static_cast<long>(oy + ky) - padding;
                if (iy < 0 || iy >= static_cast<long>(H)) continue;
                const double* xrow = xplane + iy * W;
                double* gxrow = gxplane ? gxplane + iy * W : nullptr;
                const double* grow = gplane + oy * WO;
                for (std::size_t ox = 0; ox < WO; ++ox) {
                  const long ix = static_cast<long>(ox + kx) - padding;
                  if (ix < 0 || ix >= static_cast<long>(W)) continue;
                  const double g = grow[ox];
                  wacc += g * xrow[ix];
                  if (gxrow) gxrow[ix] += g * wgt;
                }
              }
              if (gk) (*gk)[widx] += wacc;
            }
          }
        }
      }
    };
  }
  return out;
}

// 2x2 stride-2 max pooling with ceil semantics (partial windows at the
// right/bottom edges), so the overall backbone stride gives ceil(H/f).
inline Tensor maxpool2(const Tensor& x) {
  detail::require_rank(x, 3, "maxpool2");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t HO = (H + 1) / 2, WO = (W + 1) / 2;
  Tensor out(Shape{C, HO, WO});
  auto argmax = std::make_shared<std::vector<std::size_t>>(C * HO * WO);
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t c = 0; c < C; ++c) {
    const double* plane = xv + c * H * W;
    for (std::size_t oy = 0; oy < HO; ++oy) {
      for (std::size_t ox = 0; ox < WO; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t besti = 0;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          const std::size_t iy = oy * 2 + dy;
          if (iy >= H) continue;
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t ix = ox * 2 + dx;
            if (ix >= W) continue;
            const double v = plane[iy * W + ix];
            if (v > best) {
              best = v;
              besti = iy * W + ix;
            }
          }
        }
        ov[(c * HO + oy) * WO + ox] = best;
        (*argmax)[(c * HO + oy) * WO + ox] = c * H * W + besti;
      }
    }
  }
  if (auto node = detail::record(out, {x}, "maxpool2")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    const std::size_t n = out.size();
    node->backward = [gx, go, argmax, n]() {
      for (std::size_t i = 0; i < n; ++i) (*gx)[(*argmax)[i]] += (*go)[i];
    };
  }
  return out;
}

// [C x H x W] -> [C x 1 x 1] per-channel mean.
inline Tensor global_avg_pool(const Tensor& x) {
  detail::require_rank(x, 3, "global_avg_pool");
  const std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  Tensor out(Shape{C, 1, 1});
  const double* xv = x.data();
  double* ov = out.data();
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < HW; ++i) acc += xv[c * HW + i];
    ov[c] = acc / static_cast<double>(HW);
  }
  if (auto node = detail::record(out, {x}, "global_avg_pool")) {
    auto gx = x.grad_buffer();
    auto go = node->out_grad;
    node->backward = [gx, go, C, HW]() {
      for (std::size_t c = 0; c < C; ++c) {
        const double g = (*go)[c] / static_cast<double>(HW);
        for (std::size_t i = 0; i < HW; ++i) (*gx)[c * HW + i] += g;
      }
    };
  }
  return out;
}

// 1 - s for a [1] tensor.
inline Tensor one_minus(const Tensor& s) {
  detail::require_scalar(s, "one_minus");
  return add_const(mul_const(s, -1.0), 1.0);
}

}  // namespace dualmod
