#include "tt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tt {

namespace {

constexpr double kClamp = 1e-7;

void check_pair(const PredictionPair& pair) {
  if (!pair.s || !pair.r) throw std::invalid_argument("loss: null heatmap");
  if (pair.s->width != pair.r->width || pair.s->height != pair.r->height)
    throw std::invalid_argument("loss: heatmap shape mismatch");
}

double clamp_p(double v) { return std::clamp(v, kClamp, 1.0 - kClamp); }

}  // namespace

double dice_loss(const PredictionPair& pair, double epsilon) {
  check_pair(pair);
  if (epsilon <= 0.0) throw std::invalid_argument("dice_loss: epsilon must be > 0");
  double inter = 0.0, sum_s = 0.0, sum_r = 0.0;
  const auto& s = pair.s->values;
  const auto& r = pair.r->values;
  for (std::size_t i = 0; i < s.size(); ++i) {
    inter += static_cast<double>(s[i]) * r[i];
    sum_s += s[i];
    sum_r += r[i];
  }
  return -(2.0 * inter + epsilon) / (sum_s + sum_r + epsilon);
}

double crossentropy_loss(const PredictionPair& pair, Reduction reduction) {
  return weighted_crossentropy_loss(pair, 1.0, 1.0, reduction);
}

double weighted_crossentropy_loss(const PredictionPair& pair, double w_pos, double w_neg,
                                  Reduction reduction) {
  check_pair(pair);
  if (w_pos <= 0.0 || w_neg <= 0.0)
    throw std::invalid_argument("weighted_crossentropy_loss: weights must be positive");
  const auto& s = pair.s->values;
  const auto& r = pair.r->values;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double p = clamp_p(s[i]);
    const double y = r[i];
    acc -= w_pos * y * std::log(p) + w_neg * (1.0 - y) * std::log(1.0 - p);
  }
  return reduction == Reduction::mean ? acc / static_cast<double>(s.size()) : acc;
}

double compound_loss(const PredictionPair& pair, const LossConfig& cfg) {
  return dice_loss(pair, cfg.epsilon) +
         cfg.lambda * crossentropy_loss(pair, cfg.reduction);
}

double loss_value(const PredictionPair& pair, const LossConfig& cfg) {
  switch (cfg.kind) {
    case LossKind::dice:
      return dice_loss(pair, cfg.epsilon);
    case LossKind::weighted_ce:
      return weighted_crossentropy_loss(pair, cfg.w_pos, cfg.w_neg, cfg.reduction);
    case LossKind::compound:
      return compound_loss(pair, cfg);
  }
  throw std::logic_error("loss_value: bad kind");
}

std::vector<float> loss_grad(const PredictionPair& pair, const LossConfig& cfg) {
  check_pair(pair);
  const auto& s = pair.s->values;
  const auto& r = pair.r->values;
  std::vector<float> grad(s.size(), 0.0f);
  const double inv_n =
      cfg.reduction == Reduction::mean ? 1.0 / static_cast<double>(s.size()) : 1.0;

  if (cfg.kind == LossKind::dice || cfg.kind == LossKind::compound) {
    double inter = 0.0, sum_s = 0.0, sum_r = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      inter += static_cast<double>(s[i]) * r[i];
      sum_s += s[i];
      sum_r += r[i];
    }
    const double num = 2.0 * inter + cfg.epsilon;
    const double den = sum_s + sum_r + cfg.epsilon;
    for (std::size_t i = 0; i < s.size(); ++i)
      grad[i] += static_cast<float>(num / (den * den) - 2.0 * r[i] / den);
  }
  if (cfg.kind == LossKind::weighted_ce || cfg.kind == LossKind::compound) {
    const double wp = cfg.kind == LossKind::weighted_ce ? cfg.w_pos : 1.0;
    const double wn = cfg.kind == LossKind::weighted_ce ? cfg.w_neg : 1.0;
    const double scale = (cfg.kind == LossKind::compound ? cfg.lambda : 1.0) * inv_n;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double p = clamp_p(s[i]);
      const double y = r[i];
      grad[i] += static_cast<float>(scale * (-wp * y / p + wn * (1.0 - y) / (1.0 - p)));
    }
  }
  return grad;
}

std::pair<double, double> class_weights_from_dataset(std::span<const Heatmap> masks) {
  if (masks.empty()) throw std::invalid_argument("class_weights_from_dataset: no masks");
  double pos = 0.0, total = 0.0;
  for (const auto& m : masks) {
    for (float v : m.values) pos += v >= 0.5f ? 1.0 : 0.0;
    total += static_cast<double>(m.values.size());
  }
  if (pos == 0.0) throw std::invalid_argument("class_weights_from_dataset: no positive pixels");
  if (pos == total)
    throw std::invalid_argument("class_weights_from_dataset: no negative pixels");
  const double pos_frac = pos / total;
  // raw weights 1/frac, scaled so pos_frac*w_pos + neg_frac*w_neg = 1
  return {0.5 / pos_frac, 0.5 / (1.0 - pos_frac)};
}

}  // namespace tt
