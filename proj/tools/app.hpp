#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "tt/data.hpp"
#include "tt/models.hpp"
#include "tt/postprocess.hpp"
#include "tt/training.hpp"

namespace ttcli {

struct DataConfig {
  std::string manifest;  // when empty, frames come from the synthetic generator
  tt::SyntheticConfig synthetic;
  std::array<double, 3> split{0.45, 0.05, 0.50};
};

struct SweepConfig {
  std::vector<std::string> loss;
  std::vector<double> fraction;
  std::vector<int> input_size;
  std::vector<bool> augmentation;

  bool present() const {
    return !loss.empty() || !fraction.empty() || !input_size.empty() || !augmentation.empty();
  }
};

// One file drives both `train` and `experiment`; every field has a default so
// a minimal config stays small and the echoed copy shows what actually ran.
struct AppConfig {
  unsigned seed = 0;
  tt::ModelSpec model;
  tt::TrainConfig train;
  tt::PostprocessConfig postprocess;
  DataConfig data;
  SweepConfig sweep;
};

AppConfig load_config(const std::string& path);
nlohmann::json config_to_json(const AppConfig& cfg);
void echo_config(const AppConfig& cfg, const std::string& out_dir);

// train/val/test per cfg.data, with the top-level seed fanned out to the
// generator and the split shuffle.
std::array<tt::Dataset, 3> load_splits(const AppConfig& cfg);

std::string loss_kind_name(tt::LossKind kind);
tt::LossKind loss_kind_from_name(const std::string& name);

// Grayscale line plot of y over x, written as PNG.
void save_line_plot(const std::vector<double>& xs, const std::vector<double>& ys,
                    const std::string& x_label, const std::string& path);

int run_train(const std::string& config_path, const std::string& out_dir);
int run_experiment(const std::string& config_path, const std::string& out_dir);

}  // namespace ttcli
