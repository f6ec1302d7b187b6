#pragma once

#include <cstdint>
#include <vector>

#include "tt/contour.hpp"

namespace tt {

struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;  // 0 or 1

  BinaryImage() = default;
  BinaryImage(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0) {}
  std::uint8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

enum class ComponentPolicy { largest, all };

struct PostprocessConfig {
  double threshold = 0.5;
  double spline_smoothing = -1.0;  // < 0: default to the number of input points
  int n_points = 100;
  ComponentPolicy component_policy = ComponentPolicy::largest;
};

// pixel = 1 iff value >= threshold (inclusive).
BinaryImage binarize(const Heatmap& heatmap, double threshold);

// Zhang-Suen iterative thinning to fixpoint. Output pixels are a subset of
// the input foreground; 8-connectivity of components is preserved.
BinaryImage skeletonize(const BinaryImage& binary);

// One point per occupied column of the selected component(s), y = mean row.
// Throws "no contour detected" when fewer than 2 foreground pixels remain.
Contour order_skeleton(const BinaryImage& skeleton, ComponentPolicy policy);

// Cubic smoothing spline y(x) evaluated at n_points uniform x over the input
// span. Fewer than 4 distinct-x points fall back to piecewise-linear
// resampling (used_fallback reports which path ran).
Contour fit_contour(const Contour& points, const PostprocessConfig& cfg,
                    bool* used_fallback = nullptr);

// binarize -> skeletonize -> order_skeleton -> fit_contour. Output has
// exactly cfg.n_points points, x-sorted, clamped to image bounds.
Contour extract_contour(const Heatmap& heatmap, const PostprocessConfig& cfg);

}  // namespace tt
