#pragma once

#include <string>

#include "dualmod/ops.hpp"
#include "dualmod/param_store.hpp"

namespace dualmod {

// Parallel RGB and thermal feature maps at one pipeline stage.
struct FeaturePair {
  Tensor rgb;
  Tensor thermal;

  FeaturePair(Tensor r, Tensor t) : rgb(std::move(r)), thermal(std::move(t)) {
    detail::require_same_shape(rgb, thermal, "FeaturePair");
    detail::require_rank(rgb, 3, "FeaturePair");
  }
};

// Scene-level gate: global average pool of the summed features, squeezed
// through two 1x1 convolutions (hidden width C/reduction) and a sigmoid,
// giving one scalar weight per sample.
struct FusionGate {
  Parameter conv1_w, conv1_b;  // [C/r x C x 1 x 1], [C/r]
  Parameter conv2_w, conv2_b;  // [1 x C/r x 1 x 1], [1]
  int channels = 0;
  int reduction = 4;

  FusionGate() = default;

  // Biases start at zero, so the initial weight is exactly 0.5: no modality
  // preference before training.
  FusionGate(ParamStore& store, const std::string& prefix, int channels_, int reduction_, Rng& rng)
      : channels(channels_), reduction(reduction_) {
    if (channels_ < 1 || reduction_ < 1 || channels_ % reduction_ != 0)
      throw ConfigError("fusion gate: channels " + std::to_string(channels_) +
                        " must be divisible by reduction " + std::to_string(reduction_));
    const auto c = static_cast<std::size_t>(channels_);
    const auto hidden = static_cast<std::size_t>(channels_ / reduction_);
    conv1_w = store.add(prefix + ".conv1", xavier_uniform(rng, Shape{hidden, c, 1, 1}, c, hidden));
    conv1_b = store.add(prefix + ".conv1.bias", Tensor(Shape{hidden}, 0.0));
    conv2_w = store.add(prefix + ".conv2", xavier_uniform(rng, Shape{1, hidden, 1, 1}, hidden, 1));
    conv2_b = store.add(prefix + ".conv2.bias", Tensor(Shape{1}, 0.0));
  }
};

// w = sigmoid(conv2(relu(conv1(avgpool(rgb + thermal))))), a [1] tensor in
// (0,1). Symmetric in its two inputs because only their sum is seen.
inline Tensor fusion_weight(const FeaturePair& pair, const FusionGate& gate) {
  if (static_cast<int>(pair.rgb.dim(0)) != gate.channels)
    throw DimensionError("fusion_weight: features " + shape_str(pair.rgb.shape()) +
                         " do not match gate channels " + std::to_string(gate.channels));
  Tensor pooled = global_avg_pool(add(pair.rgb, pair.thermal));
  Tensor hidden = relu(conv2d(pooled, gate.conv1_w.value(), gate.conv1_b.value(), 0));
  Tensor logit = conv2d(hidden, gate.conv2_w.value(), gate.conv2_b.value(), 0);
  return sigmoid(reshape(logit, Shape{1}));
}

// F_fused = w * rgb + (1-w) * thermal, element-wise convex combination.
inline Tensor fuse(const FeaturePair& pair, const Tensor& w) {
  detail::require_scalar(w, "fuse");
  if (!(w[0] > 0.0 && w[0] < 1.0))
    throw ContractError("fuse: weight must lie in (0,1), got " + std::to_string(w[0]));
  return add(mul_scalar_t(pair.rgb, w), mul_scalar_t(pair.thermal, one_minus(w)));
}

}  // namespace dualmod
