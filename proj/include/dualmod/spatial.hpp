#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "dualmod/tensor.hpp"

namespace dualmod {

// Spatial layout of the feature-map cells treated as transformer tokens, in
// row-major order: token t sits at (t / cols, t % cols).
struct TokenGrid {
  int rows = 1;
  int cols = 1;

  TokenGrid(int r, int c) : rows(r), cols(c) {
    if (r < 1 || c < 1)
      throw DimensionError("TokenGrid: rows and cols must be >= 1, got " + std::to_string(r) + "x" +
                           std::to_string(c));
  }

  int tokens() const { return rows * cols; }
  int token_row(int t) const { return t / cols; }
  int token_col(int t) const { return t % cols; }
};

// Pairwise Euclidean distances between token coordinates, in grid-cell units.
// Symmetric with zero diagonal; never part of the gradient graph.
inline Tensor pairwise_distance(const TokenGrid& grid) {
  const int n = grid.tokens();
  Tensor s(Shape{static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
  for (int i = 0; i < n; ++i) {
    s(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const double dr = static_cast<double>(grid.token_row(i) - grid.token_row(j));
      const double dc = static_cast<double>(grid.token_col(i) - grid.token_col(j));
      const double d = std::sqrt(dr * dr + dc * dc);
      s(i, j) = d;
      s(j, i) = d;
    }
  }
  return s;
}

// Cached per (rows, cols): training crops and full-size test images produce
// different token counts, so each distinct geometry is computed once.
// Concurrent readers are safe; a mutex serializes writers.
inline std::shared_ptr<const Tensor> distance_matrix(int rows, int cols) {
  static std::map<std::pair<int, int>, std::shared_ptr<const Tensor>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(rows, cols);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto s = std::make_shared<const Tensor>(pairwise_distance(TokenGrid(rows, cols)));
  cache.emplace(key, s);
  return s;
}

}  // namespace dualmod
