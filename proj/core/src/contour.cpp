#include "tt/contour.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <json.hpp>

namespace tt {

namespace {

void require_finite(const Contour& c) {
  for (const auto& p : c.points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw std::invalid_argument("contour has non-finite coordinate");
}

}  // namespace

Heatmap contour_to_mask(const Contour& contour, const MaskConfig& cfg, int width, int height) {
  if (contour.points.empty()) throw std::invalid_argument("contour_to_mask: empty contour");
  if (width <= 0 || height <= 0) throw std::invalid_argument("contour_to_mask: bad dimensions");
  if (cfg.sigma <= 0.0) throw std::invalid_argument("contour_to_mask: sigma must be > 0");
  require_finite(contour);

  Heatmap map(width, height);
  const double inv_two_sigma2 = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  const double radius = 5.0 * cfg.sigma;  // beyond this the kernel is ~1e-11
  std::vector<double> field(map.values.size(), 0.0);
  for (const auto& p : contour.points) {
    const int x0 = std::max(0, static_cast<int>(std::floor(p.x - radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(p.x + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(p.y - radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(p.y + radius)));
    for (int y = y0; y <= y1; ++y) {
      const double dy = y - p.y;
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - p.x;
        field[static_cast<std::size_t>(y) * width + x] +=
            std::exp(-(dx * dx + dy * dy) * inv_two_sigma2);
      }
    }
  }
  const double peak = *std::max_element(field.begin(), field.end());
  if (peak <= 0.0) {
    return map;  // all contour points fall outside the grid
  }
  for (std::size_t i = 0; i < field.size(); ++i) {
    const double v = field[i] / peak;
    map.values[i] = v < cfg.floor_threshold ? 0.0f : static_cast<float>(v);
  }
  return map;
}

Contour resample_contour(const Contour& contour, int n_out) {
  if (contour.points.size() < 2)
    throw std::invalid_argument("resample_contour: need at least 2 points");
  if (n_out < 2) throw std::invalid_argument("resample_contour: n_out must be >= 2");
  require_finite(contour);

  const auto& pts = contour.points;
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dx = pts[i].x - pts[i - 1].x;
    const double dy = pts[i].y - pts[i - 1].y;
    cum[i] = cum[i - 1] + std::hypot(dx, dy);
  }
  const double total = cum.back();
  if (total <= 0.0) throw std::invalid_argument("resample_contour: degenerate contour");

  Contour out;
  out.frame_id = contour.frame_id;
  out.px_per_mm = contour.px_per_mm;
  out.points.resize(n_out);
  out.points.front() = pts.front();
  out.points.back() = pts.back();
  std::size_t seg = 0;
  for (int k = 1; k + 1 < n_out; ++k) {
    const double target = total * k / (n_out - 1);
    while (seg + 2 < pts.size() && cum[seg + 1] < target) ++seg;
    const double seg_len = cum[seg + 1] - cum[seg];
    const double t = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
    out.points[k] = {pts[seg].x + t * (pts[seg + 1].x - pts[seg].x),
                     pts[seg].y + t * (pts[seg + 1].y - pts[seg].y)};
  }
  return out;
}

Contour canonicalize(const Contour& contour) {
  Contour out = contour;
  std::stable_sort(out.points.begin(), out.points.end(),
                   [](const Point& a, const Point& b) { return a.x < b.x; });
  return out;
}

double px_to_mm(double distance_px, double px_per_mm) {
  if (px_per_mm <= 0.0) throw std::invalid_argument("px_to_mm: scale must be positive");
  return distance_px / px_per_mm;
}

Contour load_contour(const std::string& path) {
  Contour c;
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    f >> j;
    const nlohmann::json* pts = &j;
    if (j.is_object()) {
      c.frame_id = j.value("frame_id", "");
      pts = &j.at("points");
    }
    for (const auto& p : *pts) c.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return c;
  }
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string header, record;
  if (!std::getline(f, header) || !std::getline(f, record))
    throw std::runtime_error("malformed annotation CSV: " + path);
  std::stringstream ss(record);
  std::string cell;
  std::getline(ss, cell, ',');
  c.frame_id = cell;
  std::vector<double> vals;
  while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
  if (vals.size() < 4 || vals.size() % 2 != 0)
    throw std::runtime_error("annotation CSV needs an even number of coordinates: " + path);
  for (std::size_t i = 0; i < vals.size(); i += 2) c.points.push_back({vals[i], vals[i + 1]});
  return c;
}

void save_contour_csv(const Contour& contour, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "frame_id";
  for (std::size_t i = 0; i < contour.points.size(); ++i) f << ",x" << i << ",y" << i;
  f << "\n" << contour.frame_id;
  f.precision(9);
  for (const auto& p : contour.points) f << "," << p.x << "," << p.y;
  f << "\n";
}

void save_contour_json(const Contour& contour, const std::string& path) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : contour.points) pts.push_back({p.x, p.y});
  nlohmann::json j{{"frame_id", contour.frame_id}, {"points", pts}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

void save_heatmap_png(const Heatmap& map, const std::string& path) {
  cv::Mat img(map.height, map.width, CV_8UC1);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      img.at<uint8_t>(y, x) =
          static_cast<uint8_t>(std::lround(255.0f * std::clamp(map.at(x, y), 0.0f, 1.0f)));
  if (!cv::imwrite(path, img)) throw std::runtime_error("cannot write " + path);
}

Heatmap load_heatmap_png(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw std::runtime_error("cannot read " + path);
  Heatmap map(img.cols, img.rows);
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x) map.at(x, y) = img.at<uint8_t>(y, x) / 255.0f;
  return map;
}

}  // namespace tt
