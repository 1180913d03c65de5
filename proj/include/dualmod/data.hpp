#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dualmod/loss_metrics.hpp"
#include "dualmod/rng.hpp"
#include "dualmod/tensor.hpp"

namespace dualmod {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One aligned RGB-T pair with head-point annotations, values in [0,1].
struct Sample {
  std::string id;
  Tensor rgb;      // [3 x H x W]
  Tensor thermal;  // [1 x H x W]
  std::vector<Point> points;

  int width() const { return static_cast<int>(rgb.dim(2)); }
  int height() const { return static_cast<int>(rgb.dim(1)); }
};

struct SceneSpec {
  int width = 64;
  int height = 64;
  int n_people = 5;
  std::uint64_t seed = 0;
  double rgb_brightness = 1.0;  // 0 simulates a scene where RGB is useless
  double blob_radius = 3.0;
};

// Deterministic synthetic scene: Gaussian head blobs at rejection-sampled
// centers (min separation 2 * blob_radius, half-pixel grid). The thermal
// channel shows the blobs at full contrast; RGB shows them scaled by
// rgb_brightness on top of a mild background texture.
inline Sample generate_scene(const SceneSpec& spec) {
  if (spec.n_people < 0) throw GenerationError("n_people must be >= 0");
  if (spec.blob_radius <= 0.0) throw GenerationError("blob_radius must be positive");
  const int w = spec.width, h = spec.height;
  Rng rng(spec.seed);

  const double margin = spec.blob_radius;
  const double min_sep = 2.0 * spec.blob_radius;
  std::vector<Point> centers;
  for (int i = 0; i < spec.n_people; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double x = std::round(rng.uniform(margin, w - 1 - margin) * 2.0) / 2.0;
      const double y = std::round(rng.uniform(margin, h - 1 - margin) * 2.0) / 2.0;
      bool ok = true;
      for (const Point& c : centers) {
        const double dx = x - c.x, dy = y - c.y;
        if (dx * dx + dy * dy < min_sep * min_sep) {
          ok = false;
          break;
        }
      }
      if (ok) {
        centers.push_back({x, y});
        placed = true;
        break;
      }
    }
    if (!placed)
      throw GenerationError("could not place " + std::to_string(spec.n_people) + " blobs in " +
                            std::to_string(w) + "x" + std::to_string(h) +
                            " with radius " + std::to_string(spec.blob_radius));
  }

  const double sigma_blob = spec.blob_radius / 2.0;
  const double inv2s2 = 1.0 / (2.0 * sigma_blob * sigma_blob);
  std::vector<double> blob(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (const Point& c : centers) {
        const double dx = x - c.x, dy = y - c.y;
        v += std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
      blob[static_cast<std::size_t>(y) * w + x] = v;
    }

  Sample s;
  s.id = "scene_" + std::to_string(spec.seed);
  // Blobs at full contrast plus mild sensor noise. The noise keeps thermal
  // from strictly dominating: a bright RGB channel carries the cleaner
  // person signal, a dark one carries none, which is what the scene-level
  // fusion gate is supposed to pick up on.
  s.thermal = Tensor(Shape{1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t i = 0; i < blob.size(); ++i)
    s.thermal[i] = std::clamp(blob[i] + rng.uniform(-0.10, 0.10), 0.0, 1.0);

  s.rgb = Tensor(Shape{3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  const double channel_gain[3] = {1.0, 0.9, 0.8};
  for (int ch = 0; ch < 3; ++ch) {
    const double kx = 0.5 + 0.25 * ch;
    const double ky = 0.3 + 0.2 * ch;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double texture = 0.15 + 0.08 * std::sin(0.35 * kx * x + 0.27 * ky * y) +
                               rng.uniform(-0.04, 0.04);
        const double person = spec.rgb_brightness * channel_gain[ch] * blob[static_cast<std::size_t>(y) * w + x];
        s.rgb(ch, y, x) = std::clamp(texture + person, 0.0, 1.0);
      }
  }
  s.points = std::move(centers);
  return s;
}

// ---------------------------------------------------------------------------
// PGM / PPM, maxval 255 (P2/P3 plain and P5/P6 raw readers, raw writers)
// ---------------------------------------------------------------------------

namespace detail {
inline void skip_pnm_junk(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c != EOF && std::isspace(static_cast<unsigned char>(c))) {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_pnm_int(std::istream& in, const std::string& path) {
  skip_pnm_junk(in);
  int v = -1;
  in >> v;
  if (!in || v < 0) throw IoError("malformed PNM header in " + path);
  return v;
}
}  // namespace detail

// Reads P2/P5 into [1 x H x W] or P3/P6 into [3 x H x W], scaled to [0,1].
inline Tensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  char p = 0, kind = 0;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6'))
    throw IoError("unsupported PNM magic in " + path);
  const bool color = kind == '3' || kind == '6';
  const bool raw = kind == '5' || kind == '6';
  const int w = detail::read_pnm_int(in, path);
  const int h = detail::read_pnm_int(in, path);
  const int maxval = detail::read_pnm_int(in, path);
  if (maxval != 255) throw IoError("expected maxval 255 in " + path + ", got " + std::to_string(maxval));
  const std::size_t channels = color ? 3 : 1;
  const std::size_t n = channels * h * w;
  std::vector<double> interleaved(n);
  if (raw) {
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (!in) throw IoError("truncated image data in " + path);
    for (std::size_t i = 0; i < n; ++i) interleaved[i] = bytes[i] / 255.0;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const int v = detail::read_pnm_int(in, path);
      if (v > 255) throw IoError("pixel value out of range in " + path);
      interleaved[i] = v / 255.0;
    }
  }
  Tensor out(Shape{channels, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  // PNM interleaves channels per pixel; tensors are planar.
  for (std::size_t y = 0; y < static_cast<std::size_t>(h); ++y)
    for (std::size_t x = 0; x < static_cast<std::size_t>(w); ++x)
      for (std::size_t c = 0; c < channels; ++c)
        out(c, y, x) = interleaved[(y * w + x) * channels + c];
  return out;
}

namespace detail {
inline unsigned char quantize_255(double v) {
  const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<unsigned char>(q);
}
}  // namespace detail

inline void write_pgm(const std::string& path, const Tensor& img) {
  detail::require_rank(img, 3, "write_pgm");
  if (img.dim(0) != 1) throw IoError("write_pgm: expected [1 x H x W], got " + shape_str(img.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open image for writing: " + path);
  out << "P5\n" << img.dim(2) << ' ' << img.dim(1) << "\n255\n";
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = detail::quantize_255(img[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("image write failed: " + path);
}

inline void write_ppm(const std::string& path, const Tensor& img) {
  detail::require_rank(img, 3, "write_ppm");
  if (img.dim(0) != 3) throw IoError("write_ppm: expected [3 x H x W], got " + shape_str(img.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open image for writing: " + path);
  const std::size_t h = img.dim(1), w = img.dim(2);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> bytes(3 * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) bytes[(y * w + x) * 3 + c] = detail::quantize_255(img(c, y, x));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("image write failed: " + path);
}

// One `x y` pair per line, pixel units, origin top-left.
inline std::vector<Point> read_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations: " + path);
  std::vector<Point> points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Point p;
    std::string rest;
    if (!(ls >> p.x >> p.y) || (ls >> rest))
      throw IoError("malformed annotation in " + path + " at line " + std::to_string(line_no) + ": '" +
                    line + "'");
    points.push_back(p);
  }
  return points;
}

inline void write_annotations(const std::string& path, const std::vector<Point>& points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open annotations for writing: " + path);
  for (const Point& p : points)
    out << format_double(p.x, "%.17g") << ' ' << format_double(p.y, "%.17g") << '\n';
  if (!out) throw IoError("annotation write failed: " + path);
}

// Layout: root/split/{rgb,thermal,annotations} with matching basenames
// (rgb/<id>.ppm, thermal/<id>.pgm, annotations/<id>.txt).
inline void write_sample(const std::string& root, const std::string& split, const Sample& s) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(root) / split;
  fs::create_directories(base / "rgb");
  fs::create_directories(base / "thermal");
  fs::create_directories(base / "annotations");
  write_ppm((base / "rgb" / (s.id + ".ppm")).string(), s.rgb);
  write_pgm((base / "thermal" / (s.id + ".pgm")).string(), s.thermal);
  write_annotations((base / "annotations" / (s.id + ".txt")).string(), s.points);
}

inline std::vector<Sample> load_dataset(const std::string& root, const std::string& split) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(root) / split;
  const fs::path rgb_dir = base / "rgb";
  if (!fs::is_directory(rgb_dir)) throw IoError("no rgb directory under " + base.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(rgb_dir)) {
    if (!entry.is_regular_file()) continue;
    ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  std::vector<Sample> samples;
  samples.reserve(ids.size());
  for (const std::string& id : ids) {
    const fs::path rgb_path = rgb_dir / (id + ".ppm");
    const fs::path thermal_path = base / "thermal" / (id + ".pgm");
    const fs::path ann_path = base / "annotations" / (id + ".txt");
    if (!fs::exists(thermal_path))
      throw IoError("sample " + id + ": missing thermal file " + thermal_path.string());
    if (!fs::exists(ann_path))
      throw IoError("sample " + id + ": missing annotation file " + ann_path.string());
    Sample s;
    s.id = id;
    s.rgb = read_pnm(rgb_path.string());
    s.thermal = read_pnm(thermal_path.string());
    if (s.rgb.dim(0) != 3) throw IoError("sample " + id + ": rgb image is not 3-channel");
    if (s.thermal.dim(0) != 1) throw IoError("sample " + id + ": thermal image is not single-channel");
    if (s.rgb.dim(1) != s.thermal.dim(1) || s.rgb.dim(2) != s.thermal.dim(2))
      throw IoError("sample " + id + ": rgb and thermal sizes differ");
    s.points = read_annotations(ann_path.string());
    for (const Point& p : s.points)
      if (p.x < 0 || p.x >= s.width() || p.y < 0 || p.y >= s.height())
        throw IoError("sample " + id + ": annotation (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                      ") outside image");
    samples.push_back(std::move(s));
  }
  return samples;
}

namespace detail {
inline Tensor crop_image(const Tensor& img, int crop, int x0, int y0, bool flip) {
  const std::size_t channels = img.dim(0);
  Tensor out(Shape{channels, static_cast<std::size_t>(crop), static_cast<std::size_t>(crop)});
  for (std::size_t c = 0; c < channels; ++c)
    for (int y = 0; y < crop; ++y)
      for (int x = 0; x < crop; ++x) {
        const int sx = flip ? x0 + crop - 1 - x : x0 + x;
        out(c, y, x) = img(c, static_cast<std::size_t>(y0 + y), static_cast<std::size_t>(sx));
      }
  return out;
}
}  // namespace detail

// Crop window at (x0, y0), optional horizontal flip. Both modalities and the
// annotations get the identical transform; an annotation survives iff its
// final coordinates land in [0, crop)^2. Flipped x' = crop - 1 - x.
inline Sample augment_fixed(const Sample& s, int crop, int x0, int y0, bool flip) {
  if (crop < 1 || crop > std::min(s.width(), s.height()))
    throw ConfigError("crop " + std::to_string(crop) + " exceeds image " + std::to_string(s.width()) + "x" +
                      std::to_string(s.height()));
  if (x0 < 0 || y0 < 0 || x0 + crop > s.width() || y0 + crop > s.height())
    throw ConfigError("crop window out of bounds");
  Sample out;
  out.id = s.id;
  out.rgb = detail::crop_image(s.rgb, crop, x0, y0, flip);
  out.thermal = detail::crop_image(s.thermal, crop, x0, y0, flip);
  for (const Point& p : s.points) {
    double x = p.x - x0;
    const double y = p.y - y0;
    if (flip) x = crop - 1 - x;
    if (x >= 0.0 && x < crop && y >= 0.0 && y < crop) out.points.push_back({x, y});
  }
  return out;
}

inline Sample augment(const Sample& s, int crop, double flip_prob, Rng& rng) {
  if (crop < 1 || crop > std::min(s.width(), s.height()))
    throw ConfigError("crop " + std::to_string(crop) + " exceeds image " + std::to_string(s.width()) + "x" +
                      std::to_string(s.height()));
  const int max_x = s.width() - crop;
  const int max_y = s.height() - crop;
  const int x0 = max_x > 0 ? static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_x) + 1)) : 0;
  const int y0 = max_y > 0 ? static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_y) + 1)) : 0;
  const bool flip = rng.uniform() < flip_prob;
  return augment_fixed(s, crop, x0, y0, flip);
}

}  // namespace dualmod
