#include "tt/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <stdexcept>

#include <Eigen/Dense>

namespace tt {

BinaryImage binarize(const Heatmap& heatmap, double threshold) {
  BinaryImage out(heatmap.width, heatmap.height);
  for (std::size_t i = 0; i < heatmap.values.size(); ++i)
    out.values[i] = heatmap.values[i] >= threshold ? 1 : 0;
  return out;
}

namespace {

// Neighbors p2..p9 clockwise from north, matching the usual Zhang-Suen
// notation.
inline void neighbors(const BinaryImage& img, int x, int y, int p[8]) {
  p[0] = img.at(x, y - 1);      // p2 N
  p[1] = img.at(x + 1, y - 1);  // p3 NE
  p[2] = img.at(x + 1, y);      // p4 E
  p[3] = img.at(x + 1, y + 1);  // p5 SE
  p[4] = img.at(x, y + 1);      // p6 S
  p[5] = img.at(x - 1, y + 1);  // p7 SW
  p[6] = img.at(x - 1, y);      // p8 W
  p[7] = img.at(x - 1, y - 1);  // p9 NW
}

}  // namespace

BinaryImage skeletonize(const BinaryImage& binary) {
  // Work on a 1-pixel zero border so neighbor reads never go out of range.
  BinaryImage img(binary.width + 2, binary.height + 2);
  for (int y = 0; y < binary.height; ++y)
    for (int x = 0; x < binary.width; ++x) img.at(x + 1, y + 1) = binary.at(x, y);

  bool changed = true;
  std::vector<std::pair<int, int>> to_delete;
  while (changed) {
    changed = false;
    for (int step = 0; step < 2; ++step) {
      to_delete.clear();
      for (int y = 1; y <= binary.height; ++y) {
        for (int x = 1; x <= binary.width; ++x) {
          if (!img.at(x, y)) continue;
          int p[8];
          neighbors(img, x, y, p);
          int b = 0, a = 0;
          for (int i = 0; i < 8; ++i) {
            b += p[i];
            if (p[i] == 0 && p[(i + 1) % 8] == 1) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          if (step == 0) {
            if (p[0] * p[2] * p[4] != 0 || p[2] * p[4] * p[6] != 0) continue;
          } else {
            if (p[0] * p[2] * p[6] != 0 || p[0] * p[4] * p[6] != 0) continue;
          }
          to_delete.emplace_back(x, y);
        }
      }
      for (auto [x, y] : to_delete) img.at(x, y) = 0;
      if (!to_delete.empty()) changed = true;
    }
  }

  BinaryImage out(binary.width, binary.height);
  for (int y = 0; y < binary.height; ++y)
    for (int x = 0; x < binary.width; ++x) out.at(x, y) = img.at(x + 1, y + 1);
  return out;
}

Contour order_skeleton(const BinaryImage& skeleton, ComponentPolicy policy) {
  const int w = skeleton.width, h = skeleton.height;
  std::vector<int> label(skeleton.values.size(), -1);
  std::vector<std::size_t> comp_size;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!skeleton.at(x, y) || label[static_cast<std::size_t>(y) * w + x] >= 0) continue;
      const int id = static_cast<int>(comp_size.size());
      comp_size.push_back(0);
      std::queue<std::pair<int, int>> q;
      q.emplace(x, y);
      label[static_cast<std::size_t>(y) * w + x] = id;
      while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop();
        ++comp_size[id];
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            auto& l = label[static_cast<std::size_t>(ny) * w + nx];
            if (skeleton.at(nx, ny) && l < 0) {
              l = id;
              q.emplace(nx, ny);
            }
          }
      }
    }
  }

  std::size_t total = 0;
  for (auto s : comp_size) total += s;
  if (total < 2) throw std::runtime_error("no contour detected");

  int keep = -1;
  if (policy == ComponentPolicy::largest)
    keep = static_cast<int>(std::max_element(comp_size.begin(), comp_size.end()) -
                            comp_size.begin());
  if (keep >= 0 && comp_size[keep] < 2) throw std::runtime_error("no contour detected");

  // Column-mean reduction guarantees a function y(x) for the spline.
  std::map<int, std::pair<double, int>> columns;  // x -> (sum y, count)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!skeleton.at(x, y)) continue;
      if (keep >= 0 && label[static_cast<std::size_t>(y) * w + x] != keep) continue;
      auto& [sum, cnt] = columns[x];
      sum += y;
      cnt += 1;
    }
  Contour out;
  for (const auto& [x, sc] : columns)
    out.points.push_back({static_cast<double>(x), sc.first / sc.second});
  if (out.points.size() < 2) throw std::runtime_error("no contour detected");
  return out;
}

namespace {

// Natural cubic smoothing spline (Reinsch-style): fitted values
// a = (I + lambda*K)^-1 y with K = Q R^-1 Q^T, lambda chosen by bisection so
// the residual sum of squares matches the smoothing factor.
struct SmoothingSpline {
  std::vector<double> x, a, m;  // knots, values, second derivatives

  double eval(double xq) const {
    const std::size_t n = x.size();
    std::size_t i = std::upper_bound(x.begin(), x.end(), xq) - x.begin();
    i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
    const double h = x[i + 1] - x[i];
    const double t1 = x[i + 1] - xq, t2 = xq - x[i];
    return (m[i] * t1 * t1 * t1 + m[i + 1] * t2 * t2 * t2) / (6.0 * h) +
           (a[i] / h - m[i] * h / 6.0) * t1 + (a[i + 1] / h - m[i + 1] * h / 6.0) * t2;
  }
};

SmoothingSpline fit_smoothing_spline(const std::vector<double>& x, const std::vector<double>& y,
                                     double smooth) {
  const int n = static_cast<int>(x.size());
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);

  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n - 2);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n - 2, n - 2);
  for (int j = 1; j <= n - 2; ++j) {
    const double hm = x[j] - x[j - 1], hj = x[j + 1] - x[j];
    q(j - 1, j - 1) = 1.0 / hm;
    q(j, j - 1) = -1.0 / hm - 1.0 / hj;
    q(j + 1, j - 1) = 1.0 / hj;
    r(j - 1, j - 1) = (hm + hj) / 3.0;
    if (j <= n - 3) {
      r(j - 1, j) = hj / 6.0;
      r(j, j - 1) = hj / 6.0;
    }
  }
  const Eigen::MatrixXd k = q * r.ldlt().solve(q.transpose());

  auto fit_for = [&](double lambda) -> Eigen::VectorXd {
    Eigen::MatrixXd sys = lambda * k;
    sys.diagonal().array() += 1.0;
    return sys.ldlt().solve(yv);
  };

  // The lambda -> infinity limit is the least-squares line; computing it
  // directly avoids solving the nearly singular system I + lambda*K.
  auto line_fit = [&]() -> Eigen::VectorXd {
    Eigen::MatrixXd design(n, 2);
    for (int i = 0; i < n; ++i) {
      design(i, 0) = 1.0;
      design(i, 1) = x[i];
    }
    const Eigen::Vector2d beta = design.colPivHouseholderQr().solve(yv);
    return design * beta;
  };

  Eigen::VectorXd a;
  if (smooth <= 0.0) {
    a = yv;  // interpolation
  } else {
    double lo = -10.0, hi = 12.0;  // log10(lambda)
    const Eigen::VectorXd a_line = line_fit();
    if ((yv - a_line).squaredNorm() <= smooth) {
      a = a_line;
    } else {
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double rss = (yv - fit_for(std::pow(10.0, mid))).squaredNorm();
        if (rss < smooth)
          lo = mid;
        else
          hi = mid;
      }
      a = fit_for(std::pow(10.0, 0.5 * (lo + hi)));
    }
  }

  SmoothingSpline sp;
  sp.x = x;
  sp.a.assign(a.data(), a.data() + n);
  const Eigen::VectorXd gamma = r.ldlt().solve(q.transpose() * a);
  sp.m.assign(n, 0.0);
  for (int j = 1; j <= n - 2; ++j) sp.m[j] = gamma(j - 1);
  return sp;
}

}  // namespace

Contour fit_contour(const Contour& points, const PostprocessConfig& cfg, bool* used_fallback) {
  if (cfg.n_points < 2) throw std::invalid_argument("fit_contour: n_points must be >= 2");
  if (points.points.size() < 2) throw std::runtime_error("no contour detected");
  Contour sorted = canonicalize(points);

  // Collapse duplicate x to their mean y; the spline needs distinct knots.
  std::vector<double> xs, ys;
  for (const auto& p : sorted.points) {
    if (!xs.empty() && p.x == xs.back()) {
      ys.back() = 0.5 * (ys.back() + p.y);
    } else {
      xs.push_back(p.x);
      ys.push_back(p.y);
    }
  }

  Contour out;
  out.frame_id = points.frame_id;
  out.px_per_mm = points.px_per_mm;

  if (xs.size() < 4) {
    if (used_fallback) *used_fallback = true;
    Contour tmp;
    for (std::size_t i = 0; i < xs.size(); ++i) tmp.points.push_back({xs[i], ys[i]});
    if (tmp.points.size() < 2) throw std::runtime_error("no contour detected");
    // Piecewise-linear in x over the same uniform grid the spline would use.
    for (int k = 0; k < cfg.n_points; ++k) {
      const double xq = xs.front() + (xs.back() - xs.front()) * k / (cfg.n_points - 1);
      std::size_t i = std::upper_bound(xs.begin(), xs.end(), xq) - xs.begin();
      i = std::clamp<std::size_t>(i, 1, xs.size() - 1) - 1;
      const double t = (xq - xs[i]) / (xs[i + 1] - xs[i]);
      out.points.push_back({xq, ys[i] + t * (ys[i + 1] - ys[i])});
    }
    return out;
  }

  if (used_fallback) *used_fallback = false;
  const double smooth =
      cfg.spline_smoothing < 0.0 ? static_cast<double>(xs.size()) : cfg.spline_smoothing;
  const SmoothingSpline sp = fit_smoothing_spline(xs, ys, smooth);
  for (int k = 0; k < cfg.n_points; ++k) {
    const double xq = xs.front() + (xs.back() - xs.front()) * k / (cfg.n_points - 1);
    out.points.push_back({xq, sp.eval(xq)});
  }
  return out;
}

Contour extract_contour(const Heatmap& heatmap, const PostprocessConfig& cfg) {
  if (cfg.threshold <= 0.0 || cfg.threshold >= 1.0)
    throw std::invalid_argument("extract_contour: threshold must be in (0, 1)");
  const BinaryImage skeleton = skeletonize(binarize(heatmap, cfg.threshold));
  Contour ordered = order_skeleton(skeleton, cfg.component_policy);
  Contour fitted = fit_contour(ordered, cfg);
  for (auto& p : fitted.points) {
    p.x = std::clamp(p.x, 0.0, static_cast<double>(heatmap.width - 1));
    p.y = std::clamp(p.y, 0.0, static_cast<double>(heatmap.height - 1));
  }
  return fitted;
}

}  // namespace tt
