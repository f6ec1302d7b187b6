#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tt/tensor.hpp"

namespace tt {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Ordered trace of the tongue surface in image coordinates. Canonical
// annotations carry exactly 100 points, x-increasing.
struct Contour {
  std::vector<Point> points;
  std::string frame_id;
  std::optional<double> px_per_mm;  // convention for this corpus: 4 px per mm

  std::size_t size() const { return points.size(); }
};

// Single-channel probability image, values in [0,1]. Doubles as a grayscale
// frame container since both share the same value range.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  Heatmap() = default;
  Heatmap(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0f) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct MaskConfig {
  double sigma = 4.0;
  double floor_threshold = 0.4;
};

// Gaussian-sum mask: kernels from every contour point are accumulated, the
// field is rescaled so its peak is 1, and values below floor_threshold drop
// to 0. Values at or above the floor are kept as-is (soft mask).
Heatmap contour_to_mask(const Contour& contour, const MaskConfig& cfg, int width, int height);

// Resamples to n_out points at equal arc-length spacing along the piecewise
// linear input; endpoints are preserved exactly.
Contour resample_contour(const Contour& contour, int n_out);

// Sorts points by x (stable) so downstream code can treat the trace as y(x).
Contour canonicalize(const Contour& contour);

double px_to_mm(double distance_px, double px_per_mm);

// Annotation files: CSV (header frame_id,x0,y0,...) or JSON
// ({"frame_id":..., "points":[[x,y],...]}; a bare point array also loads).
Contour load_contour(const std::string& path);
void save_contour_csv(const Contour& contour, const std::string& path);
void save_contour_json(const Contour& contour, const std::string& path);

// 8-bit grayscale PNG, value = round(255 * I).
void save_heatmap_png(const Heatmap& map, const std::string& path);
Heatmap load_heatmap_png(const std::string& path);

}  // namespace tt
