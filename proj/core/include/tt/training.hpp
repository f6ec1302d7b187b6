#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tt/data.hpp"
#include "tt/losses.hpp"
#include "tt/models.hpp"

namespace tt {

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-4;
  int epochs = 30;
  LossConfig loss;
  MaskConfig mask;
  std::optional<AugmentationConfig> augmentation;
  unsigned seed = 0;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

using TrainingLog = std::vector<EpochLog>;

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

// Frame resized to the model input plus the matching soft mask.
struct Sample {
  Heatmap frame;
  Heatmap mask;
  Contour annotation;  // in input-size coordinates
};

std::vector<Sample> prepare_samples(const Dataset& dataset, int input_size,
                                    const MaskConfig& mask_cfg);

// Adam over minibatches for cfg.epochs epochs; validation loss after each
// epoch; the model is left holding the weights of the best-validation epoch.
TrainingLog train(Model& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, TrainingMeta* meta = nullptr);

// Mean per-sample loss over the dataset in inference mode, no augmentation.
double evaluate_loss(Model& model, const Dataset& dataset, const LossConfig& loss,
                     const MaskConfig& mask_cfg);
double evaluate_loss_samples(Model& model, const std::vector<Sample>& samples,
                             const LossConfig& loss);

void save_training_log(const TrainingLog& log, const std::string& path);

// Adam optimizer (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  Adam(std::vector<nn::Param*> params, double lr);
  void step();

 private:
  std::vector<nn::Param*> params_;
  std::vector<Tensor> m_, v_;
  double lr_;
  long t_ = 0;
};

}  // namespace tt
