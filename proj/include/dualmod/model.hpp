#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dualmod/afm.hpp"
#include "dualmod/ops.hpp"
#include "dualmod/param_store.hpp"
#include "dualmod/sma.hpp"
#include "dualmod/spatial.hpp"

namespace dualmod {

struct ModelConfig {
  // One 3x3 conv + ReLU + stride-2 max pool per entry; the overall stride is
  // 2^len, so the default three stages give a downsample factor of 8.
  std::vector<int> backbone_channels{16, 32, 64};
  int model_dim = 64;
  int num_heads = 8;
  int num_layers = 2;
  bool sma_enabled = true;
  bool afm_enabled = true;
  bool learnable_decay = true;
  double fixed_scale = 0.5;
  double fixed_bias = 1.0;
  double leaky_slope = 0.01;
  MaskMode mask_mode = MaskMode::MultiplyLogits;
  int afm_reduction = 4;
  double sigma = 8.0;               // loss kernel width, pixels
  double empty_scene_penalty = 0.0; // 0 disables the empty-scene term

  int downsample_factor() const { return 1 << backbone_channels.size(); }

  AttentionConfig attention() const {
    AttentionConfig a;
    a.num_heads = num_heads;
    a.model_dim = model_dim;
    a.num_layers = num_layers;
    a.learnable_decay = learnable_decay;
    a.fixed_scale = fixed_scale;
    a.fixed_bias = fixed_bias;
    a.leaky_slope = leaky_slope;
    a.mask_mode = mask_mode;
    return a;
  }

  void validate() const {
    if (backbone_channels.empty()) throw ConfigError("backbone_channels must not be empty");
    for (int c : backbone_channels)
      if (c < 1) throw ConfigError("backbone channel widths must be positive");
    attention().head_dim();  // checks divisibility
    if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
    if (sigma <= 0.0) throw ConfigError("sigma must be positive");
    if (sma_enabled && !learnable_decay) {
      if (!(fixed_scale > 0.0 && fixed_scale < 1.0))
        throw ConfigError("fixed_scale must lie in (0,1), got " + std::to_string(fixed_scale));
      if (!(fixed_bias > 0.0)) throw ConfigError("fixed_bias must be positive");
    }
    if (afm_enabled && (afm_reduction < 1 || model_dim % afm_reduction != 0))
      throw ConfigError("model_dim must be divisible by afm_reduction");
    if (empty_scene_penalty < 0.0) throw ConfigError("empty_scene_penalty must be >= 0");
  }
};

// Predicted density over the token grid; the sum of all cells is the
// predicted person count.
struct DensityMap {
  Tensor values;  // [1 x h x w], nonnegative
  int downsample = 8;

  std::size_t h() const { return values.dim(1); }
  std::size_t w() const { return values.dim(2); }

  double count() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) acc += values[i];
    return acc;
  }
};

// Full pipeline: weight-shared conv backbone -> per-modality encoders with
// shared spatial decay masks -> scene-gated fusion -> regression head.
class Model {
 public:
  struct Output {
    Tensor density;   // [1 x h x w] graph tensor
    Tensor fusion_w;  // [1] graph tensor; undefined when the gate is disabled
  };

  Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto d = static_cast<std::size_t>(cfg_.model_dim);

    Rng backbone_rng(mix_seed(seed, 1));
    std::size_t in_c = 3;
    for (std::size_t s = 0; s < cfg_.backbone_channels.size(); ++s) {
      const auto out_c = static_cast<std::size_t>(cfg_.backbone_channels[s]);
      const std::string name = "backbone.conv" + std::to_string(s);
      stages_.push_back(
          {store_.add(name, xavier_uniform(backbone_rng, Shape{out_c, in_c, 3, 3}, in_c * 9, out_c * 9)),
           store_.add(name + ".bias", Tensor(Shape{out_c}, 0.0))});
      in_c = out_c;
    }

    Rng proj_rng(mix_seed(seed, 2));
    proj_ = {store_.add("proj", xavier_uniform(proj_rng, Shape{d, in_c, 1, 1}, in_c, d)),
             store_.add("proj.bias", Tensor(Shape{d}, 0.0))};

    if (cfg_.sma_enabled && cfg_.learnable_decay)
      decay_ = make_decay_params(store_, "decay", cfg_.num_heads, cfg_.leaky_slope);

    Rng enc_rgb_rng(mix_seed(seed, 3));
    Rng enc_t_rng(mix_seed(seed, 4));
    for (int l = 0; l < cfg_.num_layers; ++l) {
      enc_rgb_.emplace_back(store_, "encoder_rgb.layer" + std::to_string(l), cfg_.model_dim,
                            cfg_.num_heads, enc_rgb_rng);
      enc_thermal_.emplace_back(store_, "encoder_thermal.layer" + std::to_string(l), cfg_.model_dim,
                                cfg_.num_heads, enc_t_rng);
    }

    if (cfg_.afm_enabled) {
      Rng gate_rng(mix_seed(seed, 5));
      gate_.emplace(store_, "fusion_gate", cfg_.model_dim, cfg_.afm_reduction, gate_rng);
    }

    Rng head_rng(mix_seed(seed, 6));
    const std::size_t h1 = std::max<std::size_t>(d / 2, 1);
    const std::size_t h2 = std::max<std::size_t>(d / 4, 1);
    head1_ = {store_.add("head.conv0", xavier_uniform(head_rng, Shape{h1, d, 3, 3}, d * 9, h1 * 9)),
              store_.add("head.conv0.bias", Tensor(Shape{h1}, 0.0))};
    head2_ = {store_.add("head.conv1", xavier_uniform(head_rng, Shape{h2, h1, 3, 3}, h1 * 9, h2 * 9)),
              store_.add("head.conv1.bias", Tensor(Shape{h2}, 0.0))};
    // The final layer starts with damped weights and a small positive bias:
    // every cell begins alive (the rectified head can otherwise be born with
    // zero gradient everywhere) and the initial count sits below typical
    // scene counts, so early updates push density up instead of slamming the
    // whole head negative.
    Tensor head3_w = xavier_uniform(head_rng, Shape{1, h2, 1, 1}, h2, 1);
    for (std::size_t i = 0; i < head3_w.size(); ++i) head3_w[i] *= 0.2;
    head3_ = {store_.add("head.conv2", std::move(head3_w)),
              store_.add("head.conv2.bias", Tensor(Shape{1}, 0.05))};
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const DecayParams* decay() const { return decay_ ? &*decay_ : nullptr; }

  // Identical weights serve both modalities; single-channel input is
  // replicated to three channels first.
  Tensor backbone_forward(const Tensor& image) const {
    detail::require_rank(image, 3, "backbone");
    if (image.dim(0) != 3 && image.dim(0) != 1)
      throw DimensionError("backbone: expected 1 or 3 channels, got " + shape_str(image.shape()));
    const int f = cfg_.downsample_factor();
    if (image.dim(1) < static_cast<std::size_t>(f) || image.dim(2) < static_cast<std::size_t>(f))
      throw DimensionError("backbone: input " + shape_str(image.shape()) + " smaller than stride " +
                           std::to_string(f) + "x" + std::to_string(f));
    Tensor x = image.dim(0) == 1 ? replicate_channels(image, 3) : image;
    for (const ConvP& st : stages_) x = maxpool2(relu(conv2d(x, st.w.value(), st.b.value(), 1)));
    return x;
  }

  Output forward(const Tensor& rgb, const Tensor& thermal) const {
    detail::require_rank(rgb, 3, "forward");
    detail::require_rank(thermal, 3, "forward");
    if (rgb.dim(1) != thermal.dim(1) || rgb.dim(2) != thermal.dim(2))
      throw DimensionError("forward: rgb " + shape_str(rgb.shape()) + " and thermal " +
                           shape_str(thermal.shape()) + " are not spatially aligned");

    Tensor fr = conv2d(backbone_forward(rgb), proj_.w.value(), proj_.b.value(), 0);
    Tensor ft = conv2d(backbone_forward(thermal), proj_.w.value(), proj_.b.value(), 0);
    const std::size_t h = fr.dim(1), w = fr.dim(2);

    std::vector<Tensor> masks;
    if (cfg_.sma_enabled) {
      auto s = distance_matrix(static_cast<int>(h), static_cast<int>(w));
      Tensor eff_scale, eff_bias;
      if (decay_) {
        std::tie(eff_scale, eff_bias) = effective_params(*decay_);
      } else {
        eff_scale = Tensor(Shape{static_cast<std::size_t>(cfg_.num_heads)}, cfg_.fixed_scale);
        eff_bias = Tensor(Shape{static_cast<std::size_t>(cfg_.num_heads)}, cfg_.fixed_bias);
      }
      masks = build_head_masks(*s, eff_scale, eff_bias, cfg_.leaky_slope, cfg_.mask_mode);
    }

    Tensor xr = chw_to_tokens(fr);
    Tensor xt = chw_to_tokens(ft);
    for (const EncoderLayer& layer : enc_rgb_) xr = layer.forward(xr, masks, cfg_.mask_mode);
    for (const EncoderLayer& layer : enc_thermal_) xt = layer.forward(xt, masks, cfg_.mask_mode);

    Tensor fused;
    Tensor fusion_w;
    Tensor fpr = tokens_to_chw(xr, h, w);
    Tensor fpt = tokens_to_chw(xt, h, w);
    if (gate_) {
      FeaturePair pair(fpr, fpt);
      fusion_w = fusion_weight(pair, *gate_);
      fused = fuse(pair, fusion_w);
    } else {
      fused = add(fpr, fpt);
    }

    Tensor y = relu(conv2d(fused, head1_.w.value(), head1_.b.value(), 1));
    y = relu(conv2d(y, head2_.w.value(), head2_.b.value(), 1));
    // The head ends in a 1x1 convolution; the trailing ReLU keeps the density
    // nonnegative, which the counting loss assumes.
    y = relu(conv2d(y, head3_.w.value(), head3_.b.value(), 0));
    return {y, fusion_w};
  }

  // Evaluation-mode forward: no graph, returns the density map and optionally
  // the gate value (only meaningful when the gate is enabled).
  DensityMap infer(const Tensor& rgb, const Tensor& thermal, double* fusion_w_out = nullptr) const {
    NoGradGuard ng;
    Output out = forward(rgb, thermal);
    if (fusion_w_out) *fusion_w_out = out.fusion_w.defined() ? out.fusion_w[0] : -1.0;
    return {out.density, cfg_.downsample_factor()};
  }

  // Effective per-head decay values (base, threshold). Errors when the model
  // was built without spatial modulation.
  std::pair<std::vector<double>, std::vector<double>> decay_effective() const {
    if (!cfg_.sma_enabled)
      throw ConfigError("model has no decay parameters: spatial modulation is disabled");
    NoGradGuard ng;
    std::vector<double> scale, bias;
    if (decay_) {
      auto [s, b] = effective_params(*decay_);
      scale.assign(s.data(), s.data() + s.size());
      bias.assign(b.data(), b.data() + b.size());
    } else {
      scale.assign(cfg_.num_heads, cfg_.fixed_scale);
      bias.assign(cfg_.num_heads, cfg_.fixed_bias);
    }
    return {scale, bias};
  }

  void save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    const char magic[4] = {'D', 'M', 'C', 'P'};
    out.write(magic, 4);
    write_u32(out, 1);  // format version
    write_u64(out, store_.count());
    for (std::size_t i = 0; i < store_.count(); ++i) {
      const Parameter& p = store_.at(i);
      write_u32(out, static_cast<std::uint32_t>(p.name().size()));
      out.write(p.name().data(), static_cast<std::streamsize>(p.name().size()));
      write_u32(out, static_cast<std::uint32_t>(p.value().rank()));
      for (std::size_t d = 0; d < p.value().rank(); ++d) write_u64(out, p.value().dim(d));
      out.write(reinterpret_cast<const char*>(p.value().data()),
                static_cast<std::streamsize>(p.size() * sizeof(double)));
    }
    if (!out) throw IoError("checkpoint write failed: " + path);
  }

  void load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || magic[0] != 'D' || magic[1] != 'M' || magic[2] != 'C' || magic[3] != 'P')
      throw IoError("not a checkpoint file: " + path);
    const std::uint32_t version = read_u32(in, path);
    if (version != 1) throw IoError("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t count = read_u64(in, path);

    struct Entry {
      Shape shape;
      std::vector<double> data;
    };
    std::unordered_map<std::string, Entry> entries;
    std::vector<std::string> file_order;
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint32_t name_len = read_u32(in, path);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      const std::uint32_t ndim = read_u32(in, path);
      Shape shape(ndim);
      for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = read_u64(in, path);
      Entry e;
      e.shape = shape;
      e.data.resize(shape_numel(shape));
      in.read(reinterpret_cast<char*>(e.data.data()),
              static_cast<std::streamsize>(e.data.size() * sizeof(double)));
      if (!in) throw IoError("truncated checkpoint: " + path);
      file_order.push_back(name);
      entries.emplace(std::move(name), std::move(e));
    }

    std::vector<std::string> problems;
    for (std::size_t i = 0; i < store_.count(); ++i) {
      Parameter& p = store_.at(i);
      auto it = entries.find(p.name());
      if (it == entries.end()) {
        problems.push_back("missing parameter " + p.name());
        continue;
      }
      if (it->second.shape != p.value().shape())
        problems.push_back("parameter " + p.name() + ": checkpoint " + shape_str(it->second.shape) +
                           " vs model " + shape_str(p.value().shape()));
    }
    for (const std::string& name : file_order)
      if (!store_.find(name)) problems.push_back("unexpected parameter " + name);
    if (!problems.empty()) {
      std::string msg = "checkpoint " + path + " is incompatible:";
      for (const std::string& p : problems) msg += "\n  " + p;
      throw IoError(msg);
    }
    for (std::size_t i = 0; i < store_.count(); ++i) {
      Parameter& p = store_.at(i);
      p.value().values() = entries.at(p.name()).data;
    }
  }

 private:
  struct ConvP {
    Parameter w, b;
  };

  static void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("truncated checkpoint: " + path);
    return v;
  }
  static std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("truncated checkpoint: " + path);
    return v;
  }

  ModelConfig cfg_;
  ParamStore store_;
  std::vector<ConvP> stages_;
  ConvP proj_;
  std::optional<DecayParams> decay_;
  std::vector<EncoderLayer> enc_rgb_, enc_thermal_;
  std::optional<FusionGate> gate_;
  ConvP head1_, head2_, head3_;
};

}  // namespace dualmod
