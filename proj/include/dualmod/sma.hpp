#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dualmod/ops.hpp"
#include "dualmod/param_store.hpp"
#include "dualmod/spatial.hpp"

namespace dualmod {

// How the spatial decay interacts with the attention logits:
//   MultiplyLogits — element-wise product of the mask and the scaled logits;
//   AddLogMask     — adds log(mask) to the scaled logits instead.
enum class MaskMode { MultiplyLogits, AddLogMask };

struct AttentionConfig {
  int num_heads = 8;
  int model_dim = 64;
  int num_layers = 2;
  bool learnable_decay = true;
  double fixed_scale = 0.5;  // effective decay base when not learnable
  double fixed_bias = 1.0;   // effective proximity threshold when not learnable
  double leaky_slope = 0.01;
  MaskMode mask_mode = MaskMode::MultiplyLogits;

  int head_dim() const {
    if (num_heads < 1 || model_dim < 1 || model_dim % num_heads != 0)
      throw ConfigError("model_dim " + std::to_string(model_dim) + " must be divisible by num_heads " +
                        std::to_string(num_heads));
    return model_dim / num_heads;
  }
};

// Raw per-head decay parameters. Effective values go through sigmoid /
// softplus, keeping the decay base strictly inside (0,1) and the proximity
// threshold strictly positive.
struct DecayParams {
  Parameter scale;  // raw, [H]
  Parameter bias;   // raw, [H]
  double leaky_slope = 0.01;

  int num_heads() const { return static_cast<int>(scale.size()); }
};

// Raw values are seeded so the effective bases spread linearly over
// [0.1, 0.9] across heads (multi-scale start) and every effective threshold
// is 1.0 grid cell.
inline DecayParams make_decay_params(ParamStore& store, const std::string& prefix, int num_heads,
                                     double leaky_slope = 0.01) {
  Tensor scale_init(Shape{static_cast<std::size_t>(num_heads)});
  for (int h = 0; h < num_heads; ++h) {
    const double target = num_heads > 1 ? 0.1 + 0.8 * static_cast<double>(h) / (num_heads - 1) : 0.5;
    scale_init[h] = std::log(target / (1.0 - target));
  }
  const double bias_raw = std::log(std::expm1(1.0));  // softplus^{-1}(1)
  Tensor bias_init(Shape{static_cast<std::size_t>(num_heads)}, bias_raw);
  DecayParams p{store.add(prefix + ".scale", std::move(scale_init)),
                store.add(prefix + ".bias", std::move(bias_init)), leaky_slope};
  return p;
}

// (beta'_scale, beta'_bias) per head, differentiable w.r.t. the raw values.
inline std::pair<Tensor, Tensor> effective_params(const DecayParams& p) {
  return {sigmoid(p.scale.value()), softplus(p.bias.value())};
}

namespace detail {
inline void check_decay_args(const Tensor& s, double scale, double bias) {
  if (s.rank() != 2 || s.dim(0) != s.dim(1))
    throw DimensionError("decay_mask: distance matrix must be square, got " + shape_str(s.shape()));
  if (!(scale > 0.0 && scale < 1.0))
    throw ContractError("decay_mask: effective scale must lie in (0,1), got " + std::to_string(scale));
  if (!(bias > 0.0))
    throw ContractError("decay_mask: effective bias must be positive, got " + std::to_string(bias));
}
}  // namespace detail

// M_ij = scale^{leaky_relu(S_ij - bias)}, computed as exp(S' * ln scale).
// Equals 1 exactly where S_ij == bias, stays strictly positive everywhere,
// and exceeds 1 slightly below the threshold (leaky negative side).
inline Tensor decay_mask(const Tensor& s, const Tensor& scale, const Tensor& bias, double slope = 0.01) {
  detail::require_scalar(scale, "decay_mask");
  detail::require_scalar(bias, "decay_mask");
  detail::check_decay_args(s, scale[0], bias[0]);
  Tensor shifted = leaky_relu(sub_scalar_t(s, bias), slope);
  return exp(mul_scalar_t(shifted, log(scale)));
}

inline Tensor decay_mask(const Tensor& s, double scale, double bias, double slope = 0.01) {
  return decay_mask(s, Tensor::scalar(scale), Tensor::scalar(bias), slope);
}

// log M, used by the AddLogMask mode; same parameters, no exponential.
inline Tensor decay_log_mask(const Tensor& s, const Tensor& scale, const Tensor& bias,
                             double slope = 0.01) {
  detail::require_scalar(scale, "decay_log_mask");
  detail::require_scalar(bias, "decay_log_mask");
  detail::check_decay_args(s, scale[0], bias[0]);
  Tensor shifted = leaky_relu(sub_scalar_t(s, bias), slope);
  return mul_scalar_t(shifted, log(scale));
}

namespace detail {
inline Tensor scaled_logits(const Tensor& q, const Tensor& k) {
  require_rank(q, 2, "attention");
  require_rank(k, 2, "attention");
  if (q.dim(1) != k.dim(1) || q.dim(0) != k.dim(0))
    throw DimensionError("attention: Q " + shape_str(q.shape()) + " and K " + shape_str(k.shape()) +
                         " must agree");
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  return mul_const(matmul(q, transpose2d(k)), inv_sqrt_dk);
}
}  // namespace detail

inline Tensor vanilla_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  return matmul(softmax_rows(detail::scaled_logits(q, k)), v);
}

// Scaled dot-product attention with the decay mask multiplying the scaled
// logits before the row softmax.
inline Tensor modulated_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& m) {
  Tensor logits = detail::scaled_logits(q, k);
  detail::require_same_shape(logits, m, "modulated_attention");
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!(m[i] > 0.0))
      throw ContractError("modulated_attention: mask must be strictly positive, found " +
                          std::to_string(m[i]));
  return matmul(softmax_rows(mul(logits, m)), v);
}

inline Tensor attention_add_log_mask(const Tensor& q, const Tensor& k, const Tensor& v,
                                     const Tensor& log_m) {
  Tensor logits = detail::scaled_logits(q, k);
  detail::require_same_shape(logits, log_m, "attention_add_log_mask");
  return matmul(softmax_rows(add(logits, log_m)), v);
}

// Post-norm transformer encoder layer: x + MHA(x), layer norm, + feed-forward
// (linear -> ReLU -> linear, hidden 4*D), layer norm. Masks are per head; an
// empty mask list selects plain attention (the ablation baseline path).
struct EncoderLayer {
  int dim = 0;
  int heads = 1;
  Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Parameter ff1_w, ff1_b, ff2_w, ff2_b;

  EncoderLayer() = default;

  EncoderLayer(ParamStore& store, const std::string& prefix, int model_dim, int num_heads, Rng& rng)
      : dim(model_dim), heads(num_heads) {
    const auto d = static_cast<std::size_t>(model_dim);
    const std::size_t hidden = 4 * d;
    auto lin = [&](const std::string& name, std::size_t in, std::size_t out) {
      return store.add(prefix + "." + name, xavier_uniform(rng, Shape{in, out}, in, out));
    };
    auto vec = [&](const std::string& name, std::size_t n, double fill) {
      return store.add(prefix + "." + name, Tensor(Shape{n}, fill));
    };
    wq = lin("wq", d, d);
    bq = vec("bq", d, 0.0);
    wk = lin("wk", d, d);
    bk = vec("bk", d, 0.0);
    wv = lin("wv", d, d);
    bv = vec("bv", d, 0.0);
    wo = lin("wo", d, d);
    bo = vec("bo", d, 0.0);
    ln1_gain = vec("ln1.gain", d, 1.0);
    ln1_bias = vec("ln1.bias", d, 0.0);
    ff1_w = lin("ff1", d, hidden);
    ff1_b = vec("ff1.bias", hidden, 0.0);
    ff2_w = lin("ff2", hidden, d);
    ff2_b = vec("ff2.bias", d, 0.0);
    ln2_gain = vec("ln2.gain", d, 1.0);
    ln2_bias = vec("ln2.bias", d, 0.0);
  }

  // Multi-head attention sublayer (before residual): per-head projections,
  // per-head mask application, concatenation, output projection.
  Tensor attention_block(const Tensor& x, const std::vector<Tensor>& masks, MaskMode mode) const {
    if (static_cast<int>(x.dim(1)) != dim)
      throw DimensionError("encoder: input " + shape_str(x.shape()) + " does not match model dim " +
                           std::to_string(dim));
    if (!masks.empty() && static_cast<int>(masks.size()) != heads)
      throw DimensionError("encoder: expected one mask per head");
    const std::size_t dk = static_cast<std::size_t>(dim / heads);
    Tensor q = add_row_bias(matmul(x, wq.value()), bq.value());
    Tensor k = add_row_bias(matmul(x, wk.value()), bk.value());
    Tensor v = add_row_bias(matmul(x, wv.value()), bv.value());
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      const std::size_t lo = h * dk, hi = (h + 1) * dk;
      Tensor qh = slice_cols(q, lo, hi);
      Tensor kh = slice_cols(k, lo, hi);
      Tensor vh = slice_cols(v, lo, hi);
      if (masks.empty())
        head_outputs.push_back(vanilla_attention(qh, kh, vh));
      else if (mode == MaskMode::MultiplyLogits)
        head_outputs.push_back(modulated_attention(qh, kh, vh, masks[h]));
      else
        head_outputs.push_back(attention_add_log_mask(qh, kh, vh, masks[h]));
    }
    return add_row_bias(matmul(concat_cols(head_outputs), wo.value()), bo.value());
  }

  Tensor forward(const Tensor& x, const std::vector<Tensor>& masks, MaskMode mode) const {
    Tensor y = layer_norm(add(x, attention_block(x, masks, mode)), ln1_gain.value(), ln1_bias.value());
    Tensor f = add_row_bias(matmul(relu(add_row_bias(matmul(y, ff1_w.value()), ff1_b.value())),
                                   ff2_w.value()),
                            ff2_b.value());
    return layer_norm(add(y, f), ln2_gain.value(), ln2_bias.value());
  }
};

// Builds one mask (or log-mask) per head from the distance matrix and the
// heads' effective decay values. The same masks are shared by every encoder
// layer and both modality encoders.
inline std::vector<Tensor> build_head_masks(const Tensor& s, const Tensor& eff_scale,
                                            const Tensor& eff_bias, double slope, MaskMode mode) {
  if (eff_scale.shape() != eff_bias.shape())
    throw DimensionError("build_head_masks: scale " + shape_str(eff_scale.shape()) + " vs bias " +
                         shape_str(eff_bias.shape()));
  std::vector<Tensor> masks;
  const std::size_t heads = eff_scale.size();
  masks.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor sh = index_scalar(eff_scale, h);
    Tensor bh = index_scalar(eff_bias, h);
    masks.push_back(mode == MaskMode::MultiplyLogits ? decay_mask(s, sh, bh, slope)
                                                     : decay_log_mask(s, sh, bh, slope));
  }
  return masks;
}

struct DecayCurvePoint {
  int head;
  double distance;
  double mask;
};

// Samples each head's mask value over [0, max_dist] in `step` increments;
// feeds the decay-curve CSV export.
inline std::vector<DecayCurvePoint> dump_decay_curves(const std::vector<double>& eff_scale,
                                                      const std::vector<double>& eff_bias, double slope,
                                                      double max_dist, double step) {
  if (step <= 0.0) throw ContractError("dump_decay_curves: step must be positive");
  if (eff_scale.size() != eff_bias.size())
    throw ContractError("dump_decay_curves: per-head value counts differ");
  std::vector<DecayCurvePoint> out;
  const int samples = static_cast<int>(std::floor(max_dist / step + 1e-9)) + 1;
  for (std::size_t h = 0; h < eff_scale.size(); ++h) {
    for (int i = 0; i < samples; ++i) {
      const double d = i * step;
      const double shifted = d - eff_bias[h];
      const double sp = shifted > 0.0 ? shifted : slope * shifted;
      out.push_back({static_cast<int>(h), d, std::exp(sp * std::log(eff_scale[h]))});
    }
  }
  return out;
}

}  // namespace dualmod
