#include "tt/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <opencv2/imgproc.hpp>
#include <json.hpp>

namespace fs = std::filesystem;

namespace tt {

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + name);
}

namespace {

cv::Mat to_mat(const Heatmap& h) {
  cv::Mat m(h.height, h.width, CV_32FC1);
  std::copy(h.values.begin(), h.values.end(), m.ptr<float>());
  return m;
}

Heatmap from_mat(const cv::Mat& m, bool clamp01) {
  Heatmap h(m.cols, m.rows);
  const float* p = m.ptr<float>();
  for (std::size_t i = 0; i < h.values.size(); ++i)
    h.values[i] = clamp01 ? std::clamp(p[i], 0.0f, 1.0f) : p[i];
  return h;
}

// Forward affine of the draw about the image center: p' = A(p - c) + c + t.
void draw_matrix(const AugmentDraw& d, int width, int height, double a[4], double t[2]) {
  const double th = d.angle_deg * M_PI / 180.0;
  const double cs = std::cos(th) * d.zoom, sn = std::sin(th) * d.zoom;
  const double fx = d.flip ? -1.0 : 1.0;
  a[0] = cs * fx;
  a[1] = -sn;
  a[2] = sn * fx;
  a[3] = cs;
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  t[0] = cx + d.shift_x * width - (a[0] * cx + a[1] * cy);
  t[1] = cy + d.shift_y * height - (a[2] * cx + a[3] * cy);
}

}  // namespace

Point AugmentDraw::transform_point(const Point& p, int width, int height) const {
  double a[4], t[2];
  draw_matrix(*this, width, height, a, t);
  return {a[0] * p.x + a[1] * p.y + t[0], a[2] * p.x + a[3] * p.y + t[1]};
}

std::array<Dataset, 3> split_dataset(const std::vector<DataItem>& items,
                                     std::array<double, 3> fractions, unsigned seed,
                                     int image_size) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0)
    throw std::invalid_argument("split_dataset: fractions must be non-negative and sum to 1");
  if (items.size() < 3) throw std::invalid_argument("split_dataset: need at least 3 items");

  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  const std::size_t n = items.size();
  std::size_t n_train = static_cast<std::size_t>(std::llround(fractions[0] * n));
  std::size_t n_val = static_cast<std::size_t>(std::llround(fractions[1] * n));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);

  std::array<Dataset, 3> out;
  for (auto& d : out) d.image_size = image_size;
  for (std::size_t i = 0; i < n; ++i) {
    const DataItem& item = items[idx[i]];
    if (i < n_train)
      out[0].items.push_back(item);
    else if (i < n_train + n_val)
      out[1].items.push_back(item);
    else
      out[2].items.push_back(item);
  }
  return out;
}

AugmentDraw sample_draw(const AugmentationConfig& cfg, std::mt19937& rng) {
  if (cfg.rotation_deg[0] < -90.0 || cfg.rotation_deg[1] > 90.0)
    throw std::invalid_argument("augmentation: rotation range outside [-90, 90]");
  if (cfg.zoom[0] <= 0.0) throw std::invalid_argument("augmentation: zoom must be positive");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentDraw d;
  d.flip = cfg.hflip && unit(rng) < 0.5;
  d.angle_deg = cfg.rotation_deg[0] + unit(rng) * (cfg.rotation_deg[1] - cfg.rotation_deg[0]);
  d.zoom = cfg.zoom[0] + unit(rng) * (cfg.zoom[1] - cfg.zoom[0]);
  d.shift_x = cfg.shift_frac[0] + unit(rng) * (cfg.shift_frac[1] - cfg.shift_frac[0]);
  d.shift_y = cfg.shift_frac[0] + unit(rng) * (cfg.shift_frac[1] - cfg.shift_frac[0]);
  return d;
}

std::pair<Heatmap, Heatmap> apply_augment(const Heatmap& frame, const Heatmap& mask,
                                          const AugmentDraw& draw) {
  if (frame.width != mask.width || frame.height != mask.height)
    throw std::invalid_argument("apply_augment: frame/mask dimension mismatch");
  double a[4], t[2];
  draw_matrix(draw, frame.width, frame.height, a, t);
  cv::Mat m = (cv::Mat_<double>(2, 3) << a[0], a[1], t[0], a[2], a[3], t[1]);
  cv::Mat warped_frame, warped_mask;
  cv::warpAffine(to_mat(frame), warped_frame, m, cv::Size(frame.width, frame.height),
                 cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(0));
  cv::warpAffine(to_mat(mask), warped_mask, m, cv::Size(mask.width, mask.height),
                 cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(0));
  return {from_mat(warped_frame, true), from_mat(warped_mask, true)};
}

Dataset subsample_training(const Dataset& dataset, double fraction, unsigned seed) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("subsample_training: fraction must be in (0, 1]");
  const std::size_t n = dataset.items.size();
  const std::size_t k =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(k, n));
  std::sort(idx.begin(), idx.end());
  Dataset out;
  out.image_size = dataset.image_size;
  for (std::size_t i : idx) out.items.push_back(dataset.items[i]);
  return out;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_frames < 1) throw std::invalid_argument("generate_synthetic: n_frames must be >= 1");
  const int s = cfg.image_size;
  if (s < 32) throw std::invalid_argument("generate_synthetic: image_size too small");

  std::mt19937 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Dataset ds;
  ds.image_size = s;
  for (int f = 0; f < cfg.n_frames; ++f) {
    // Tongue-like curve: opening-downward quadratic arc plus a low-frequency
    // sinusoidal perturbation.
    const double x0 = (0.08 + 0.10 * unit(rng)) * s;
    const double x1 = (0.82 + 0.10 * unit(rng)) * s;
    const double y_base = (0.55 + 0.17 * unit(rng)) * s;
    const double height = (0.6 + 0.4 * unit(rng)) * cfg.arc_height_frac * s;
    const double amp = unit(rng) * cfg.wiggle_frac * s;
    const double omega = 1.5 + 1.5 * unit(rng);
    const double phase = 2.0 * M_PI * unit(rng);
    auto curve_y = [&](double x) {
      const double u = 2.0 * (x - x0) / (x1 - x0) - 1.0;  // [-1, 1]
      return y_base - height * (1.0 - u * u) + amp * std::sin(omega * u * M_PI + phase);
    };

    Heatmap frame(s, s);
    const double band_sigma = 1.8;
    auto render_ridge = [&](double rx0, double rx1, auto&& yfun, double gain) {
      for (int x = std::max(0, static_cast<int>(std::ceil(rx0)));
           x <= std::min(s - 1, static_cast<int>(std::floor(rx1))); ++x) {
        const double yc = yfun(static_cast<double>(x));
        const int lo = std::max(0, static_cast<int>(std::floor(yc - 5 * band_sigma)));
        const int hi = std::min(s - 1, static_cast<int>(std::ceil(yc + 5 * band_sigma)));
        for (int y = lo; y <= hi; ++y) {
          const double d = y - yc;
          const float v =
              static_cast<float>(gain * std::exp(-d * d / (2.0 * band_sigma * band_sigma)));
          frame.at(x, y) = std::max(frame.at(x, y), v);
        }
        // Fainter reflection below the surface, as in real scans.
        const int ry = static_cast<int>(std::lround(yc + 9.0));
        if (ry >= 0 && ry < s)
          frame.at(x, ry) = std::max(frame.at(x, ry), static_cast<float>(0.2 * gain));
      }
    };
    render_ridge(x0, x1, curve_y, 1.0);

    for (int d = 0; d < cfg.distractor_edges; ++d) {
      const double dx0 = unit(rng) * 0.5 * s;
      const double dx1 = dx0 + (0.2 + 0.3 * unit(rng)) * s;
      const double dy = (0.1 + 0.3 * unit(rng)) * s;  // above the tongue band
      const double dh = (unit(rng) - 0.5) * 0.2 * s;
      render_ridge(dx0, dx1, [&](double x) {
        const double u = (x - dx0) / (dx1 - dx0);
        return dy + dh * u * (1.0 - u) * 4.0;
      }, 0.45);
    }

    if (cfg.noise > 0.0) {
      for (auto& v : frame.values) {
        const double speckle = 1.0 + cfg.noise * gauss(rng);
        const double floor_glow = 0.04 * cfg.noise * std::abs(gauss(rng));
        v = static_cast<float>(std::clamp(v * speckle + floor_glow, 0.0, 1.0));
      }
    }

    Contour truth;
    char id[32];
    std::snprintf(id, sizeof(id), "f%05d", f);
    truth.frame_id = id;
    truth.px_per_mm = 4.0;
    const int samples = 256;
    for (int i = 0; i < samples; ++i) {
      const double x = x0 + (x1 - x0) * i / (samples - 1);
      truth.points.push_back({x, curve_y(x)});
    }
    truth = resample_contour(truth, 100);

    DataItem item;
    item.frame = std::move(frame);
    item.annotation = std::move(truth);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

Heatmap resize_frame(const Heatmap& frame, int out_width, int out_height) {
  if (frame.width == out_width && frame.height == out_height) return frame;
  cv::Mat dst;
  const int interp =
      (out_width < frame.width || out_height < frame.height) ? cv::INTER_AREA : cv::INTER_LINEAR;
  cv::resize(to_mat(frame), dst, cv::Size(out_width, out_height), 0, 0, interp);
  return from_mat(dst, true);
}

Contour scale_contour(const Contour& c, double sx, double sy) {
  Contour out = c;
  for (auto& p : out.points) {
    p.x *= sx;
    p.y *= sy;
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::string& dir, Split split) {
  fs::create_directories(fs::path(dir) / "frames");
  fs::create_directories(fs::path(dir) / "annotations");
  nlohmann::json items = nlohmann::json::array();
  int counter = 0;
  for (const auto& item : dataset.items) {
    std::string id = item.annotation.frame_id;
    if (id.empty()) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "f%05d", counter);
      id = buf;
    }
    ++counter;
    const std::string frame_rel = "frames/" + id + ".png";
    const std::string ann_rel = "annotations/" + id + ".csv";
    save_heatmap_png(item.frame, (fs::path(dir) / frame_rel).string());
    save_contour_csv(item.annotation, (fs::path(dir) / ann_rel).string());
    items.push_back({{"frame", frame_rel},
                     {"annotation", ann_rel},
                     {"split", split_name(split)}});
  }
  nlohmann::json manifest{{"image_size", dataset.image_size}, {"items", items}};
  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("cannot write manifest in " + dir);
  f << manifest.dump(2) << "\n";
}

namespace {

Dataset load_dataset_impl(const std::string& manifest_path, const Split* only) {
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot open " + manifest_path);
  nlohmann::json manifest;
  f >> manifest;
  const fs::path base = fs::path(manifest_path).parent_path();
  Dataset ds;
  ds.image_size = manifest.value("image_size", 0);
  for (const auto& j : manifest.at("items")) {
    if (only && split_from_name(j.value("split", "train")) != *only) continue;
    DataItem item;
    item.frame_path = (base / j.at("frame").get<std::string>()).string();
    item.annotation_path = (base / j.at("annotation").get<std::string>()).string();
    item.frame = load_heatmap_png(item.frame_path);
    item.annotation = load_contour(item.annotation_path);
    if (ds.image_size == 0) ds.image_size = item.frame.width;
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace

Dataset load_dataset(const std::string& manifest_path) {
  return load_dataset_impl(manifest_path, nullptr);
}

Dataset load_dataset_split(const std::string& manifest_path, Split split) {
  return load_dataset_impl(manifest_path, &split);
}

}  // namespace tt
