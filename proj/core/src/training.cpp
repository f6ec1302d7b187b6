#include "tt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace tt {

Adam::Adam(std::vector<nn::Param*> params, double lr) : params_(std::move(params)), lr_(lr) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, t_);
  const double bc2 = 1.0 - std::pow(beta2, t_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k]->value;
    auto& g = params_[k]->grad;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = static_cast<float>(beta1 * m[i] + (1.0 - beta1) * g[i]);
      v[i] = static_cast<float>(beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]);
      p[i] -= static_cast<float>(lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps));
    }
  }
}

std::vector<Sample> prepare_samples(const Dataset& dataset, int input_size,
                                    const MaskConfig& mask_cfg) {
  std::vector<Sample> out;
  out.reserve(dataset.items.size());
  for (const auto& item : dataset.items) {
    Sample s;
    s.frame = resize_frame(item.frame, input_size, input_size);
    const double sx = static_cast<double>(input_size) / item.frame.width;
    const double sy = static_cast<double>(input_size) / item.frame.height;
    s.annotation = scale_contour(item.annotation, sx, sy);
    s.mask = contour_to_mask(s.annotation, mask_cfg, input_size, input_size);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

// Forward+backward over one minibatch; returns the mean per-sample loss.
double train_batch(Model& model, const std::vector<const Sample*>& batch,
                   const LossConfig& loss) {
  const int n = static_cast<int>(batch.size());
  const int sz = model.spec.input_size;
  Tensor x({n, 1, sz, sz});
  for (int i = 0; i < n; ++i)
    std::copy(batch[i]->frame.values.begin(), batch[i]->frame.values.end(),
              x.data() + static_cast<std::size_t>(i) * sz * sz);
  const Tensor& y = model.graph.forward(x, /*train=*/true);

  Tensor grad(y.shape());
  double total = 0.0;
  Heatmap pred(sz, sz);
  const double inv_n = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    std::copy(y.data() + static_cast<std::size_t>(i) * sz * sz,
              y.data() + static_cast<std::size_t>(i + 1) * sz * sz, pred.values.begin());
    PredictionPair pair{&pred, &batch[i]->mask};
    total += loss_value(pair, loss);
    const std::vector<float> g = loss_grad(pair, loss);
    float* dst = grad.data() + static_cast<std::size_t>(i) * sz * sz;
    for (std::size_t j = 0; j < g.size(); ++j) dst[j] = static_cast<float>(g[j] * inv_n);
  }
  model.graph.backward(grad);
  return total * inv_n;
}

std::vector<Tensor> snapshot(Model& model) {
  std::vector<Tensor> out;
  for (auto* p : model.graph.params()) out.push_back(p->value);
  for (auto* b : model.graph.buffers()) out.push_back(b->value);
  return out;
}

void restore(Model& model, const std::vector<Tensor>& snap) {
  std::size_t k = 0;
  for (auto* p : model.graph.params()) p->value = snap[k++];
  for (auto* b : model.graph.buffers()) b->value = snap[k++];
}

}  // namespace

double evaluate_loss_samples(Model& model, const std::vector<Sample>& samples,
                             const LossConfig& loss) {
  if (samples.empty()) throw std::invalid_argument("evaluate_loss: empty dataset");
  const int sz = model.spec.input_size;
  double total = 0.0;
  Tensor x({1, 1, sz, sz});
  Heatmap pred(sz, sz);
  for (const auto& s : samples) {
    std::copy(s.frame.values.begin(), s.frame.values.end(), x.data());
    const Tensor& y = model.graph.forward(x, /*train=*/false);
    std::copy(y.data(), y.data() + y.size(), pred.values.begin());
    PredictionPair pair{&pred, &s.mask};
    total += loss_value(pair, loss);
  }
  return total / static_cast<double>(samples.size());
}

double evaluate_loss(Model& model, const Dataset& dataset, const LossConfig& loss,
                     const MaskConfig& mask_cfg) {
  const auto samples = prepare_samples(dataset, model.spec.input_size, mask_cfg);
  return evaluate_loss_samples(model, samples, loss);
}

TrainingLog train(Model& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, TrainingMeta* meta) {
  if (train_set.items.empty()) throw std::invalid_argument("train: empty training set");
  if (val_set.items.empty()) throw std::invalid_argument("train: empty validation set");
  if (cfg.batch_size < 1 || cfg.epochs < 1 || cfg.learning_rate <= 0.0)
    throw std::invalid_argument("train: bad config");

  const auto train_samples = prepare_samples(train_set, model.spec.input_size, cfg.mask);
  const auto val_samples = prepare_samples(val_set, model.spec.input_size, cfg.mask);

  Adam opt(model.graph.params(), cfg.learning_rate);
  TrainingLog log;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  std::vector<Tensor> best_weights;

  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // One RNG per (seed, epoch): the item order and augmentation draws do not
    // depend on how batches are executed.
    std::seed_seq seq{cfg.seed, static_cast<unsigned>(epoch)};
    std::mt19937 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<Sample> augmented;
    if (cfg.augmentation) {
      augmented.reserve(train_samples.size());
      for (std::size_t idx : order) {
        const auto& s = train_samples[idx];
        const AugmentDraw draw = sample_draw(*cfg.augmentation, rng);
        auto [frame, mask] = apply_augment(s.frame, s.mask, draw);
        augmented.push_back({std::move(frame), std::move(mask), s.annotation});
      }
    }

    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Sample*> batch;
      for (std::size_t i = start; i < end; ++i)
        batch.push_back(cfg.augmentation ? &augmented[i] : &train_samples[order[i]]);
      model.graph.zero_grad();
      const double batch_loss = train_batch(model, batch, cfg.loss);
      if (!std::isfinite(batch_loss))
        throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch));
      opt.step();
      epoch_loss += batch_loss;
      ++n_batches;
    }
    epoch_loss /= static_cast<double>(n_batches);

    const double val_loss = evaluate_loss_samples(model, val_samples, cfg.loss);
    if (!std::isfinite(val_loss))
      throw TrainingDiverged("non-finite validation loss at epoch " + std::to_string(epoch));
    const auto t1 = std::chrono::steady_clock::now();
    log.push_back({epoch, epoch_loss, val_loss,
                   std::chrono::duration<double>(t1 - t0).count()});
    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best_weights = snapshot(model);
    }
  }

  restore(model, best_weights);
  if (meta) {
    meta->epochs = cfg.epochs;
    meta->lambda = cfg.loss.lambda;
    meta->epsilon = cfg.loss.epsilon;
    meta->best_epoch = best_epoch;
    meta->best_val_loss = best_val;
    switch (cfg.loss.kind) {
      case LossKind::dice: meta->loss_kind = "dice"; break;
      case LossKind::weighted_ce: meta->loss_kind = "weighted_ce"; break;
      case LossKind::compound: meta->loss_kind = "compound"; break;
    }
  }
  return log;
}

void save_training_log(const TrainingLog& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "epoch,train_loss,val_loss,seconds\n";
  f.precision(9);
  for (const auto& e : log)
    f << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.seconds << "\n";
}

}  // namespace tt
