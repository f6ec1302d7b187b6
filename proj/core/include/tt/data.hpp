#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "tt/contour.hpp"

namespace tt {

enum class Split { train, val, test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct DataItem {
  std::string frame_path;       // empty for purely in-memory items
  std::string annotation_path;
  Heatmap frame;                // grayscale, values in [0,1]
  Contour annotation;
};

struct Dataset {
  std::vector<DataItem> items;
  int image_size = 0;
};

struct AugmentationConfig {
  bool hflip = true;                      // applied with probability 0.5
  std::array<double, 2> rotation_deg{-15.0, 15.0};
  std::array<double, 2> zoom{0.9, 1.1};
  std::array<double, 2> shift_frac{-0.1, 0.1};  // both axes, fraction of size
  unsigned seed = 0;
};

// One sampled geometric transform, shared by frame and mask so the pair stays
// aligned. Kept explicit so tests can apply the same transform analytically.
struct AugmentDraw {
  bool flip = false;
  double angle_deg = 0.0;
  double zoom = 1.0;
  double shift_x = 0.0;  // fraction of width
  double shift_y = 0.0;

  Point transform_point(const Point& p, int width, int height) const;
};

struct SyntheticConfig {
  int n_frames = 200;
  int image_size = 128;
  double noise = 0.25;        // multiplicative speckle intensity
  int distractor_edges = 1;   // bright non-tongue arcs per frame
  double arc_height_frac = 0.22;
  double wiggle_frac = 0.02;
  unsigned seed = 0;
};

std::array<Dataset, 3> split_dataset(const std::vector<DataItem>& items,
                                     std::array<double, 3> fractions, unsigned seed,
                                     int image_size);

AugmentDraw sample_draw(const AugmentationConfig& cfg, std::mt19937& rng);
std::pair<Heatmap, Heatmap> apply_augment(const Heatmap& frame, const Heatmap& mask,
                                          const AugmentDraw& draw);

// Deterministic prefix of one seeded shuffle, so fractions nest:
// subsample(f1) is a subset of subsample(f2) whenever f1 <= f2.
Dataset subsample_training(const Dataset& dataset, double fraction, unsigned seed);

Dataset generate_synthetic(const SyntheticConfig& cfg);

// Bilinear rescale; used to bring frames to a model's input size.
Heatmap resize_frame(const Heatmap& frame, int out_width, int out_height);
Contour scale_contour(const Contour& c, double sx, double sy);

// Manifest layout: <dir>/frames/*.png, <dir>/annotations/*.csv and a
// manifest.json listing items with split tags.
void save_dataset(const Dataset& dataset, const std::string& dir, Split split = Split::train);
Dataset load_dataset(const std::string& manifest_path);
Dataset load_dataset_split(const std::string& manifest_path, Split split);

}  // namespace tt
