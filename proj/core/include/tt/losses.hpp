#pragma once

#include <span>
#include <utility>
#include <vector>

#include "tt/contour.hpp"

namespace tt {

enum class LossKind { dice, weighted_ce, compound };
enum class Reduction { sum, mean };

struct LossConfig {
  LossKind kind = LossKind::compound;
  double epsilon = 1.0;  // Dice smoothing
  double lambda = 5.0;   // crossentropy weight in the compound loss
  double w_pos = 1.0;
  double w_neg = 1.0;
  Reduction reduction = Reduction::mean;  // applies to the crossentropy terms
};

// Prediction s and ground truth r over the same grid. s is clamped away from
// {0,1} before any logarithm.
struct PredictionPair {
  const Heatmap* s = nullptr;
  const Heatmap* r = nullptr;
};

double dice_loss(const PredictionPair& pair, double epsilon);
double crossentropy_loss(const PredictionPair& pair, Reduction reduction = Reduction::sum);
double weighted_crossentropy_loss(const PredictionPair& pair, double w_pos, double w_neg,
                                  Reduction reduction = Reduction::sum);
double compound_loss(const PredictionPair& pair, const LossConfig& cfg);

// Dispatch on cfg.kind. Used by the trainer.
double loss_value(const PredictionPair& pair, const LossConfig& cfg);
// dL/ds for the configured loss, same layout as s.
std::vector<float> loss_grad(const PredictionPair& pair, const LossConfig& cfg);

// Inverse-frequency class weights, scaled so the average per-pixel weight is
// 1. Masks are binarized at 0.5 for counting.
std::pair<double, double> class_weights_from_dataset(std::span<const Heatmap> masks);

}  // namespace tt
