#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dualmod/loss_metrics.hpp"
#include "dualmod/model.hpp"

namespace dualmod {

struct SyntheticSpec {
  int train_count = 3;
  int val_count = 0;
  int width = 64;
  int height = 64;
  int people_min = 5;
  int people_max = 12;
  double brightness_min = 1.0;
  double brightness_max = 1.0;
  double blob_radius = 3.0;

  bool operator==(const SyntheticSpec&) const = default;
};

struct OptimConfig {
  double lr = 1e-3;  // desk-scale default; 1e-5 suits long full-data runs
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const OptimConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  OptimConfig optim;
  int epochs = 100;
  long max_steps = 0;  // 0 = no cap
  int val_every = 1;
  int crop = 0;  // 0 disables cropping
  double flip_prob = 0.0;
  std::uint64_t seed = 1;
  std::string data_source = "synthetic";  // synthetic | disk
  std::string data_path;
  std::string eval_split = "test";
  SyntheticSpec synthetic;
  std::string out_dir = "out";
};

inline bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.backbone_channels == b.backbone_channels && a.model_dim == b.model_dim &&
         a.num_heads == b.num_heads && a.num_layers == b.num_layers && a.sma_enabled == b.sma_enabled &&
         a.afm_enabled == b.afm_enabled && a.learnable_decay == b.learnable_decay &&
         a.fixed_scale == b.fixed_scale && a.fixed_bias == b.fixed_bias && a.leaky_slope == b.leaky_slope &&
         a.mask_mode == b.mask_mode && a.afm_reduction == b.afm_reduction && a.sigma == b.sigma &&
         a.empty_scene_penalty == b.empty_scene_penalty;
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.model == b.model && a.optim == b.optim && a.epochs == b.epochs && a.max_steps == b.max_steps &&
         a.val_every == b.val_every && a.crop == b.crop && a.flip_prob == b.flip_prob && a.seed == b.seed &&
         a.data_source == b.data_source && a.data_path == b.data_path && a.eval_split == b.eval_split &&
         a.synthetic == b.synthetic && a.out_dir == b.out_dir;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("config key " + key + ": expected a number, got '" + v + "'");
  return d;
}

inline long parse_long(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long n = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("config key " + key + ": expected an integer, got '" + v + "'");
  return n;
}

inline int parse_int(const std::string& key, const std::string& v) {
  return static_cast<int>(parse_long(key, v));
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config key " + key + ": expected true or false, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int(key, item));
  }
  if (out.empty()) throw ConfigError("config key " + key + ": expected a comma-separated list");
  return out;
}

}  // namespace detail

inline const char* mask_mode_name(MaskMode m) {
  return m == MaskMode::MultiplyLogits ? "multiply_logits" : "add_log_mask";
}

inline MaskMode parse_mask_mode(const std::string& v) {
  if (v == "multiply_logits") return MaskMode::MultiplyLogits;
  if (v == "add_log_mask") return MaskMode::AddLogMask;
  throw ConfigError("model.mask_mode: expected multiply_logits or add_log_mask, got '" + v + "'");
}

inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "seed")
    c.seed = static_cast<std::uint64_t>(parse_long(key, value));
  else if (key == "out_dir")
    c.out_dir = value;
  else if (key == "model.backbone_channels")
    c.model.backbone_channels = parse_int_list(key, value);
  else if (key == "model.dim")
    c.model.model_dim = parse_int(key, value);
  else if (key == "model.heads")
    c.model.num_heads = parse_int(key, value);
  else if (key == "model.layers")
    c.model.num_layers = parse_int(key, value);
  else if (key == "model.sma")
    c.model.sma_enabled = parse_bool(key, value);
  else if (key == "model.afm")
    c.model.afm_enabled = parse_bool(key, value);
  else if (key == "model.learnable_decay")
    c.model.learnable_decay = parse_bool(key, value);
  else if (key == "model.fixed_scale")
    c.model.fixed_scale = parse_double(key, value);
  else if (key == "model.fixed_bias")
    c.model.fixed_bias = parse_double(key, value);
  else if (key == "model.leaky_slope")
    c.model.leaky_slope = parse_double(key, value);
  else if (key == "model.mask_mode")
    c.model.mask_mode = parse_mask_mode(value);
  else if (key == "model.afm_reduction")
    c.model.afm_reduction = parse_int(key, value);
  else if (key == "model.sigma")
    c.model.sigma = parse_double(key, value);
  else if (key == "model.empty_scene_penalty")
    c.model.empty_scene_penalty = parse_double(key, value);
  else if (key == "optim.lr")
    c.optim.lr = parse_double(key, value);
  else if (key == "optim.weight_decay")
    c.optim.weight_decay = parse_double(key, value);
  else if (key == "optim.beta1")
    c.optim.beta1 = parse_double(key, value);
  else if (key == "optim.beta2")
    c.optim.beta2 = parse_double(key, value);
  else if (key == "optim.eps")
    c.optim.eps = parse_double(key, value);
  else if (key == "train.epochs")
    c.epochs = parse_int(key, value);
  else if (key == "train.max_steps")
    c.max_steps = parse_long(key, value);
  else if (key == "train.val_every")
    c.val_every = parse_int(key, value);
  else if (key == "train.crop")
    c.crop = parse_int(key, value);
  else if (key == "train.flip_prob")
    c.flip_prob = parse_double(key, value);
  else if (key == "data.source")
    c.data_source = value;
  else if (key == "data.path")
    c.data_path = value;
  else if (key == "eval.split")
    c.eval_split = value;
  else if (key == "synthetic.train_count")
    c.synthetic.train_count = parse_int(key, value);
  else if (key == "synthetic.val_count")
    c.synthetic.val_count = parse_int(key, value);
  else if (key == "synthetic.width")
    c.synthetic.width = parse_int(key, value);
  else if (key == "synthetic.height")
    c.synthetic.height = parse_int(key, value);
  else if (key == "synthetic.people_min")
    c.synthetic.people_min = parse_int(key, value);
  else if (key == "synthetic.people_max")
    c.synthetic.people_max = parse_int(key, value);
  else if (key == "synthetic.brightness_min")
    c.synthetic.brightness_min = parse_double(key, value);
  else if (key == "synthetic.brightness_max")
    c.synthetic.brightness_max = parse_double(key, value);
  else if (key == "synthetic.blob_radius")
    c.synthetic.blob_radius = parse_double(key, value);
  else
    throw ConfigError("unknown config key: " + key);
}

// Grammar: one `key = value` per line; blank lines and lines starting with
// `#` are skipped; inline comments are not supported (values may contain
// spaces).
inline RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value, got '" + t +
                        "'");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    apply_config_entry(c, key, value);
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

inline std::string serialize_run_config(const RunConfig& c) {
  std::ostringstream out;
  auto d = [](double v) { return format_double(v, "%.17g"); };
  out << "seed = " << c.seed << '\n';
  out << "out_dir = " << c.out_dir << '\n';
  out << "model.backbone_channels = ";
  for (std::size_t i = 0; i < c.model.backbone_channels.size(); ++i) {
    if (i) out << ',';
    out << c.model.backbone_channels[i];
  }
  out << '\n';
  out << "model.dim = " << c.model.model_dim << '\n';
  out << "model.heads = " << c.model.num_heads << '\n';
  out << "model.layers = " << c.model.num_layers << '\n';
  out << "model.sma = " << (c.model.sma_enabled ? "true" : "false") << '\n';
  out << "model.afm = " << (c.model.afm_enabled ? "true" : "false") << '\n';
  out << "model.learnable_decay = " << (c.model.learnable_decay ? "true" : "false") << '\n';
  out << "model.fixed_scale = " << d(c.model.fixed_scale) << '\n';
  out << "model.fixed_bias = " << d(c.model.fixed_bias) << '\n';
  out << "model.leaky_slope = " << d(c.model.leaky_slope) << '\n';
  out << "model.mask_mode = " << mask_mode_name(c.model.mask_mode) << '\n';
  out << "model.afm_reduction = " << c.model.afm_reduction << '\n';
  out << "model.sigma = " << d(c.model.sigma) << '\n';
  out << "model.empty_scene_penalty = " << d(c.model.empty_scene_penalty) << '\n';
  out << "optim.lr = " << d(c.optim.lr) << '\n';
  out << "optim.weight_decay = " << d(c.optim.weight_decay) << '\n';
  out << "optim.beta1 = " << d(c.optim.beta1) << '\n';
  out << "optim.beta2 = " << d(c.optim.beta2) << '\n';
  out << "optim.eps = " << d(c.optim.eps) << '\n';
  out << "train.epochs = " << c.epochs << '\n';
  out << "train.max_steps = " << c.max_steps << '\n';
  out << "train.val_every = " << c.val_every << '\n';
  out << "train.crop = " << c.crop << '\n';
  out << "train.flip_prob = " << d(c.flip_prob) << '\n';
  out << "data.source = " << c.data_source << '\n';
  out << "data.path = " << c.data_path << '\n';
  out << "eval.split = " << c.eval_split << '\n';
  out << "synthetic.train_count = " << c.synthetic.train_count << '\n';
  out << "synthetic.val_count = " << c.synthetic.val_count << '\n';
  out << "synthetic.width = " << c.synthetic.width << '\n';
  out << "synthetic.height = " << c.synthetic.height << '\n';
  out << "synthetic.people_min = " << c.synthetic.people_min << '\n';
  out << "synthetic.people_max = " << c.synthetic.people_max << '\n';
  out << "synthetic.brightness_min = " << d(c.synthetic.brightness_min) << '\n';
  out << "synthetic.brightness_max = " << d(c.synthetic.brightness_max) << '\n';
  out << "synthetic.blob_radius = " << d(c.synthetic.blob_radius) << '\n';
  return out.str();
}

// Fails fast, before any model or data work.
inline void validate_run_config(const RunConfig& c) {
  c.model.validate();
  if (c.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (c.max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  if (c.val_every < 1) throw ConfigError("train.val_every must be >= 1");
  if (c.crop < 0) throw ConfigError("train.crop must be >= 0");
  if (c.flip_prob < 0.0 || c.flip_prob > 1.0) throw ConfigError("train.flip_prob must lie in [0,1]");
  if (c.optim.lr <= 0.0) throw ConfigError("optim.lr must be positive");
  if (c.optim.weight_decay < 0.0) throw ConfigError("optim.weight_decay must be >= 0");
  if (c.optim.beta1 < 0.0 || c.optim.beta1 >= 1.0) throw ConfigError("optim.beta1 must lie in [0,1)");
  if (c.optim.beta2 < 0.0 || c.optim.beta2 >= 1.0) throw ConfigError("optim.beta2 must lie in [0,1)");
  if (c.optim.eps <= 0.0) throw ConfigError("optim.eps must be positive");
  if (c.data_source != "synthetic" && c.data_source != "disk")
    throw ConfigError("data.source must be synthetic or disk, got '" + c.data_source + "'");
  if (c.data_source == "disk" && c.data_path.empty())
    throw ConfigError("data.path is required when data.source = disk");
  if (c.data_source == "synthetic") {
    const SyntheticSpec& s = c.synthetic;
    if (s.train_count < 0 || s.val_count < 0) throw ConfigError("synthetic counts must be >= 0");
    if (s.width < 1 || s.height < 1) throw ConfigError("synthetic image size must be positive");
    if (s.people_min < 0 || s.people_max < s.people_min)
      throw ConfigError("synthetic people range is invalid");
    if (s.brightness_min < 0.0 || s.brightness_max > 1.0 || s.brightness_max < s.brightness_min)
      throw ConfigError("synthetic brightness range must lie in [0,1]");
    if (s.blob_radius <= 0.0) throw ConfigError("synthetic.blob_radius must be positive");
  }
}

}  // namespace dualmod
