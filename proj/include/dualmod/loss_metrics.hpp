#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "dualmod/model.hpp"
#include "dualmod/ops.hpp"

namespace dualmod {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Posterior weight of each annotation at each density cell:
//   p_i(cell) = N(center; z_i, sigma^2 I) / sum_n N(center; z_n, sigma^2 I)
// computed with per-cell max subtraction so far-away cells stay stable.
// Cell (r, c) sits at pixel center ((c + 0.5) f, (r + 0.5) f).
// Row-major [points x cells]; every cell's column sums to 1 across points.
inline std::vector<double> posterior_weights(std::size_t h, std::size_t w, int downsample,
                                             const std::vector<Point>& points, double sigma) {
  if (sigma <= 0.0) throw ConfigError("sigma must be positive, got " + std::to_string(sigma));
  const std::size_t n_cells = h * w;
  const std::size_t m = points.size();
  std::vector<double> p(m * n_cells);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t cell = r * w + c;
      const double cx = (static_cast<double>(c) + 0.5) * downsample;
      const double cy = (static_cast<double>(r) + 0.5) * downsample;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m; ++i) {
        const double dx = cx - points[i].x;
        const double dy = cy - points[i].y;
        const double a = -(dx * dx + dy * dy) * inv2s2;
        p[i * n_cells + cell] = a;
        if (a > best) best = a;
      }
      double sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double e = std::exp(p[i * n_cells + cell] - best);
        p[i * n_cells + cell] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < m; ++i) p[i * n_cells + cell] /= sum;
    }
  }
  return p;
}

// Point-supervised counting loss: sum_i |1 - <p_i, D>| over annotations. With
// no annotations the sum is empty (0); the optional empty-scene term
// penalty * sum(D) is off by default.
inline Tensor bayesian_loss(const Tensor& density, const std::vector<Point>& points, double sigma,
                            int downsample, double empty_scene_penalty = 0.0) {
  detail::require_rank(density, 3, "bayesian_loss");
  if (density.dim(0) != 1)
    throw DimensionError("bayesian_loss: expected [1 x h x w] density, got " + shape_str(density.shape()));
  if (sigma <= 0.0) throw ConfigError("sigma must be positive, got " + std::to_string(sigma));
  const std::size_t h = density.dim(1), w = density.dim(2);
  if (points.empty()) {
    if (empty_scene_penalty > 0.0) return mul_const(sum_all(density), empty_scene_penalty);
    return Tensor::scalar(0.0);
  }
  Tensor posterior(Shape{points.size(), h * w}, posterior_weights(h, w, downsample, points, sigma));
  Tensor expected = matmul(posterior, reshape(density, Shape{h * w, 1}));
  return sum_all(abs(add_const(mul_const(expected, -1.0), 1.0)));
}

namespace detail {
// Region index along one axis: boundaries at multiples of extent / 2^level,
// half-open on the left, the last region absorbing the far edge.
inline std::size_t region_index(double coord, double extent, int regions_per_axis) {
  const double t = coord * regions_per_axis / extent;
  long idx = static_cast<long>(std::floor(t));
  if (idx < 0) idx = 0;
  if (idx >= regions_per_axis) idx = regions_per_axis - 1;
  return static_cast<std::size_t>(idx);
}
}  // namespace detail

// Grid Average Mean absolute Error for one image at level L: the image is
// split into 2^L x 2^L regions; density cells contribute by the region of
// their pixel-space centers, points by their coordinates; the result is the
// sum of absolute regional count errors.
inline double game_level(const DensityMap& pred, int width, int height, const std::vector<Point>& points,
                         int level) {
  if (level < 0 || level > 3) throw ConfigError("GAME level must lie in [0,3], got " + std::to_string(level));
  const int g = 1 << level;
  std::vector<double> pred_counts(static_cast<std::size_t>(g) * g, 0.0);
  std::vector<double> gt_counts(static_cast<std::size_t>(g) * g, 0.0);
  const std::size_t h = pred.h(), w = pred.w();
  const int f = pred.downsample;
  for (std::size_t r = 0; r < h; ++r) {
    const double cy = (static_cast<double>(r) + 0.5) * f;
    const std::size_t gy = detail::region_index(cy, height, g);
    for (std::size_t c = 0; c < w; ++c) {
      const double cx = (static_cast<double>(c) + 0.5) * f;
      const std::size_t gx = detail::region_index(cx, width, g);
      pred_counts[gy * g + gx] += pred.values[r * w + c];
    }
  }
  for (const Point& p : points) {
    const std::size_t gx = detail::region_index(p.x, width, g);
    const std::size_t gy = detail::region_index(p.y, height, g);
    gt_counts[gy * g + gx] += 1.0;
  }
  double err = 0.0;
  for (std::size_t i = 0; i < pred_counts.size(); ++i) err += std::abs(pred_counts[i] - gt_counts[i]);
  return err;
}

inline double mae(const std::vector<double>& pred_counts, const std::vector<double>& gt_counts) {
  if (pred_counts.empty() || pred_counts.size() != gt_counts.size())
    throw ConfigError("mae: need equal-length nonempty count lists");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred_counts.size(); ++i) acc += std::abs(pred_counts[i] - gt_counts[i]);
  return acc / static_cast<double>(pred_counts.size());
}

inline double rmse(const std::vector<double>& pred_counts, const std::vector<double>& gt_counts) {
  if (pred_counts.empty() || pred_counts.size() != gt_counts.size())
    throw ConfigError("rmse: need equal-length nonempty count lists");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred_counts.size(); ++i) {
    const double d = pred_counts[i] - gt_counts[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred_counts.size()));
}

struct ImageEval {
  std::string id;
  double count_pred = 0.0;
  double count_gt = 0.0;
  std::array<double, 4> game{};
  double fusion_w = 0.0;
  bool has_fusion_w = false;
};

struct MetricReport {
  std::array<double, 4> game{};
  double rmse = 0.0;
  double mae = 0.0;
  int n_images = 0;
};

inline MetricReport aggregate_evals(const std::vector<ImageEval>& evals) {
  if (evals.empty()) throw ConfigError("metrics undefined for an empty evaluation set");
  MetricReport rep;
  rep.n_images = static_cast<int>(evals.size());
  std::vector<double> preds, gts;
  preds.reserve(evals.size());
  gts.reserve(evals.size());
  for (const ImageEval& e : evals) {
    for (int l = 0; l < 4; ++l) rep.game[l] += e.game[l];
    preds.push_back(e.count_pred);
    gts.push_back(e.count_gt);
  }
  for (int l = 0; l < 4; ++l) rep.game[l] /= static_cast<double>(evals.size());
  rep.mae = mae(preds, gts);
  rep.rmse = rmse(preds, gts);
  return rep;
}

inline std::string format_double(double v, const char* fmt = "%.12g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

// Per-image rows plus one AGGREGATE row (summed counts, mean GAME levels,
// mean gate weight). The gate column reads `na` when the gate is disabled.
inline void write_report_csv(const std::string& path, const std::vector<ImageEval>& evals) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open report for writing: " + path);
  out << "image_id,count_pred,count_gt,game0,game1,game2,game3,fusion_w\n";
  double sum_pred = 0.0, sum_gt = 0.0, sum_w = 0.0;
  std::array<double, 4> mean_game{};
  int n_w = 0;
  for (const ImageEval& e : evals) {
    out << e.id << ',' << format_double(e.count_pred) << ',' << format_double(e.count_gt);
    for (int l = 0; l < 4; ++l) out << ',' << format_double(e.game[l]);
    out << ',' << (e.has_fusion_w ? format_double(e.fusion_w) : std::string("na")) << '\n';
    sum_pred += e.count_pred;
    sum_gt += e.count_gt;
    for (int l = 0; l < 4; ++l) mean_game[l] += e.game[l];
    if (e.has_fusion_w) {
      sum_w += e.fusion_w;
      ++n_w;
    }
  }
  const double n = static_cast<double>(evals.size());
  out << "AGGREGATE," << format_double(sum_pred) << ',' << format_double(sum_gt);
  for (int l = 0; l < 4; ++l) out << ',' << format_double(evals.empty() ? 0.0 : mean_game[l] / n);
  out << ',' << (n_w > 0 ? format_double(sum_w / n_w) : std::string("na")) << '\n';
  if (!out) throw IoError("report write failed: " + path);
}

}  // namespace dualmod
