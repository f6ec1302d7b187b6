#pragma once

#include <memory>
#include <string>

#include "tt/contour.hpp"
#include "tt/nn.hpp"

namespace tt {

enum class Arch { unet, dense_unet };

struct ModelSpec {
  Arch arch = Arch::unet;
  int input_size = 128;  // square; 32, 64, 128 or 224
  std::vector<int> unet_channels{32, 64, 128, 256, 512};
  std::vector<int> densenet_block_sizes{6, 12, 24, 16};
  int densenet_growth = 32;
  std::vector<int> up_growth_rates{16, 24, 12, 6, 6};
  unsigned init_seed = 0;
};

struct TrainingMeta {
  std::string loss_kind;
  double lambda = 5.0;
  double epsilon = 1.0;
  int epochs = 0;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

struct Model {
  ModelSpec spec;
  nn::Graph graph;
};

std::string arch_name(Arch arch);
Arch arch_from_name(const std::string& name);

// Builders throw on input sizes incompatible with the downsampling depth.
std::unique_ptr<Model> build_unet(const ModelSpec& spec);
std::unique_ptr<Model> build_dense_unet(const ModelSpec& spec);
std::unique_ptr<Model> build_model(const ModelSpec& spec);

// Deterministic inference (batch-norm running statistics, no dropout).
// The frame must already be input_size x input_size with values in [0,1].
Heatmap predict_heatmap(Model& model, const Heatmap& frame);

// Checkpoints are a weight blob (base + ".weights") plus a JSON sidecar
// (base + ".json") carrying the spec, preprocessing and training metadata.
void save_checkpoint(Model& model, const TrainingMeta& meta, const std::string& base_path);
std::unique_ptr<Model> load_checkpoint(const std::string& base_path,
                                       TrainingMeta* meta = nullptr);

}  // namespace tt
