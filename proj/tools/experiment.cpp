#include "app.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tt/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ttcli {

std::string loss_kind_name(tt::LossKind kind) {
  switch (kind) {
    case tt::LossKind::dice: return "dice";
    case tt::LossKind::weighted_ce: return "weighted_ce";
    case tt::LossKind::compound: return "compound";
  }
  return "compound";
}

tt::LossKind loss_kind_from_name(const std::string& name) {
  if (name == "dice") return tt::LossKind::dice;
  if (name == "weighted_ce" || name == "wce") return tt::LossKind::weighted_ce;
  if (name == "compound") return tt::LossKind::compound;
  throw std::runtime_error("unknown loss kind: " + name);
}

namespace {

void parse_loss(const json& j, tt::LossConfig& loss) {
  if (j.contains("kind")) loss.kind = loss_kind_from_name(j.at("kind").get<std::string>());
  loss.epsilon = j.value("epsilon", loss.epsilon);
  loss.lambda = j.value("lambda", loss.lambda);
  loss.w_pos = j.value("w_pos", loss.w_pos);
  loss.w_neg = j.value("w_neg", loss.w_neg);
}

void parse_augmentation(const json& j, tt::AugmentationConfig& a) {
  a.hflip = j.value("hflip", a.hflip);
  if (j.contains("rotation_deg")) j.at("rotation_deg").get_to(a.rotation_deg);
  if (j.contains("zoom")) j.at("zoom").get_to(a.zoom);
  if (j.contains("shift_frac")) j.at("shift_frac").get_to(a.shift_frac);
}

}  // namespace

AppConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config is not valid JSON: " + std::string(e.what()));
  }

  AppConfig cfg;
  try {
    cfg.seed = j.value("seed", 0u);

    if (j.contains("model")) {
      const json& m = j.at("model");
      if (m.contains("arch")) cfg.model.arch = tt::arch_from_name(m.at("arch").get<std::string>());
      cfg.model.input_size = m.value("input_size", cfg.model.input_size);
      if (m.contains("unet_channels"))
        m.at("unet_channels").get_to(cfg.model.unet_channels);
      if (m.contains("densenet_block_sizes"))
        m.at("densenet_block_sizes").get_to(cfg.model.densenet_block_sizes);
      cfg.model.densenet_growth = m.value("densenet_growth", cfg.model.densenet_growth);
      if (m.contains("up_growth_rates"))
        m.at("up_growth_rates").get_to(cfg.model.up_growth_rates);
    }

    if (j.contains("train")) {
      const json& t = j.at("train");
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      if (t.contains("loss")) parse_loss(t.at("loss"), cfg.train.loss);
      if (t.contains("augmentation") && !t.at("augmentation").is_null()) {
        tt::AugmentationConfig a;
        parse_augmentation(t.at("augmentation"), a);
        cfg.train.augmentation = a;
      }
    }

    if (j.contains("mask")) {
      cfg.train.mask.sigma = j.at("mask").value("sigma", cfg.train.mask.sigma);
      cfg.train.mask.floor_threshold =
          j.at("mask").value("floor_threshold", cfg.train.mask.floor_threshold);
    }

    if (j.contains("postprocess")) {
      const json& p = j.at("postprocess");
      cfg.postprocess.threshold = p.value("threshold", cfg.postprocess.threshold);
      cfg.postprocess.spline_smoothing =
          p.value("spline_smoothing", cfg.postprocess.spline_smoothing);
      cfg.postprocess.n_points = p.value("n_points", cfg.postprocess.n_points);
    }

    if (j.contains("data")) {
      const json& d = j.at("data");
      if (d.contains("manifest")) {
        cfg.data.manifest = d.at("manifest").get<std::string>();
        if (!fs::exists(cfg.data.manifest))
          throw std::runtime_error("dataset manifest not found: " + cfg.data.manifest);
      }
      if (d.contains("synthetic")) {
        const json& s = d.at("synthetic");
        cfg.data.synthetic.n_frames = s.value("n_frames", cfg.data.synthetic.n_frames);
        cfg.data.synthetic.image_size = s.value("image_size", cfg.data.synthetic.image_size);
        cfg.data.synthetic.noise = s.value("noise", cfg.data.synthetic.noise);
        cfg.data.synthetic.distractor_edges =
            s.value("distractor_edges", cfg.data.synthetic.distractor_edges);
      }
      if (d.contains("split")) d.at("split").get_to(cfg.data.split);
    }

    if (j.contains("sweep") && !j.at("sweep").is_null()) {
      const json& s = j.at("sweep");
      if (s.contains("loss"))
        for (const auto& name : s.at("loss")) {
          cfg.sweep.loss.push_back(name.get<std::string>());
          loss_kind_from_name(cfg.sweep.loss.back());  // validate early
        }
      if (s.contains("fraction")) s.at("fraction").get_to(cfg.sweep.fraction);
      if (s.contains("input_size")) s.at("input_size").get_to(cfg.sweep.input_size);
      if (s.contains("augmentation")) s.at("augmentation").get_to(cfg.sweep.augmentation);
      for (const auto& [key, axis] : s.items())
        if (axis.is_array() && axis.empty())
          throw std::runtime_error("sweep axis '" + key + "' is empty");
      for (double f : cfg.sweep.fraction)
        if (f <= 0.0 || f > 1.0) throw std::runtime_error("sweep fraction out of (0, 1]");
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("invalid config: " + std::string(e.what()));
  }

  if (cfg.train.batch_size < 1) throw std::runtime_error("batch_size must be >= 1");
  if (cfg.train.epochs < 1) throw std::runtime_error("epochs must be >= 1");
  if (cfg.train.learning_rate <= 0.0) throw std::runtime_error("learning_rate must be > 0");
  const auto& sp = cfg.data.split;
  if (std::abs(sp[0] + sp[1] + sp[2] - 1.0) > 1e-9 || sp[0] <= 0.0 || sp[1] <= 0.0)
    throw std::runtime_error("data.split must be positive fractions summing to 1");
  return cfg;
}

json config_to_json(const AppConfig& cfg) {
  json aug = nullptr;
  if (cfg.train.augmentation) {
    const auto& a = *cfg.train.augmentation;
    aug = {{"hflip", a.hflip},
           {"rotation_deg", a.rotation_deg},
           {"zoom", a.zoom},
           {"shift_frac", a.shift_frac}};
  }
  json sweep = nullptr;
  if (cfg.sweep.present()) {
    sweep = json::object();
    if (!cfg.sweep.loss.empty()) sweep["loss"] = cfg.sweep.loss;
    if (!cfg.sweep.fraction.empty()) sweep["fraction"] = cfg.sweep.fraction;
    if (!cfg.sweep.input_size.empty()) sweep["input_size"] = cfg.sweep.input_size;
    if (!cfg.sweep.augmentation.empty()) sweep["augmentation"] = cfg.sweep.augmentation;
  }
  return json{
      {"seed", cfg.seed},
      {"model",
       {{"arch", tt::arch_name(cfg.model.arch)},
        {"input_size", cfg.model.input_size},
        {"unet_channels", cfg.model.unet_channels},
        {"densenet_block_sizes", cfg.model.densenet_block_sizes},
        {"densenet_growth", cfg.model.densenet_growth},
        {"up_growth_rates", cfg.model.up_growth_rates}}},
      {"train",
       {{"batch_size", cfg.train.batch_size},
        {"learning_rate", cfg.train.learning_rate},
        {"epochs", cfg.train.epochs},
        {"optimizer", "adam"},
        {"loss",
         {{"kind", loss_kind_name(cfg.train.loss.kind)},
          {"epsilon", cfg.train.loss.epsilon},
          {"lambda", cfg.train.loss.lambda},
          {"w_pos", cfg.train.loss.w_pos},
          {"w_neg", cfg.train.loss.w_neg}}},
        {"augmentation", aug}}},
      {"mask", {{"sigma", cfg.train.mask.sigma},
                {"floor_threshold", cfg.train.mask.floor_threshold}}},
      {"postprocess",
       {{"threshold", cfg.postprocess.threshold},
        {"spline_smoothing", cfg.postprocess.spline_smoothing},
        {"n_points", cfg.postprocess.n_points}}},
      {"data",
       {{"manifest", cfg.data.manifest},
        {"synthetic",
         {{"n_frames", cfg.data.synthetic.n_frames},
          {"image_size", cfg.data.synthetic.image_size},
          {"noise", cfg.data.synthetic.noise},
          {"distractor_edges", cfg.data.synthetic.distractor_edges}}},
        {"split", cfg.data.split}}},
      {"sweep", sweep}};
}

void echo_config(const AppConfig& cfg, const std::string& out_dir) {
  std::ofstream f(fs::path(out_dir) / "config.json");
  if (!f) throw std::runtime_error("cannot write config echo in " + out_dir);
  f << config_to_json(cfg).dump(2) << "\n";
}

std::array<tt::Dataset, 3> load_splits(const AppConfig& cfg) {
  tt::Dataset all;
  if (!cfg.data.manifest.empty()) {
    all = tt::load_dataset(cfg.data.manifest);
  } else {
    tt::SyntheticConfig s = cfg.data.synthetic;
    s.seed = cfg.seed;
    all = tt::generate_synthetic(s);
  }
  return tt::split_dataset(all.items, cfg.data.split, cfg.seed + 1, all.image_size);
}

namespace {

// Seed fan-out: one top-level seed drives generation, split, init, shuffle
// and augmentation through fixed offsets.
tt::TrainConfig seeded_train_config(const AppConfig& cfg) {
  tt::TrainConfig t = cfg.train;
  t.seed = cfg.seed + 3;
  if (t.augmentation) t.augmentation->seed = cfg.seed + 4;
  return t;
}

tt::ModelSpec seeded_model_spec(const AppConfig& cfg) {
  tt::ModelSpec m = cfg.model;
  m.init_seed = cfg.seed + 2;
  return m;
}

double eval_mean_msd(tt::Model& model, const tt::Dataset& test_set,
                     const tt::PostprocessConfig& post, tt::AggregateStats* stats = nullptr) {
  std::vector<double> scores;
  const int in = model.spec.input_size;
  int failed = 0;
  for (const auto& item : test_set.items) {
    const double sx = double(in) / item.frame.width, sy = double(in) / item.frame.height;
    const tt::Heatmap heat = tt::predict_heatmap(model, tt::resize_frame(item.frame, in, in));
    try {
      tt::Contour pred = tt::extract_contour(heat, post);
      pred = tt::scale_contour(pred, 1.0 / sx, 1.0 / sy);  // back to dataset coordinates
      scores.push_back(tt::msd(pred, item.annotation));
    } catch (const std::exception&) {
      ++failed;  // frame with no detected contour; excluded like in eval reports
    }
  }
  if (scores.empty())
    throw std::runtime_error("no contour detected on any of the " +
                             std::to_string(test_set.items.size()) + " test frames");
  if (failed > 0)
    std::cerr << "warning: no contour on " << failed << "/" << test_set.items.size()
              << " test frames\n";
  const tt::AggregateStats agg = tt::summarize(scores);
  if (stats) *stats = agg;
  return agg.mean;
}

}  // namespace

int run_train(const std::string& config_path, const std::string& out_dir) {
  AppConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  fs::create_directories(out_dir);
  echo_config(cfg, out_dir);

  const auto splits = load_splits(cfg);
  auto model = tt::build_model(seeded_model_spec(cfg));
  tt::TrainingMeta meta;
  tt::TrainingLog log;
  try {
    log = tt::train(*model, splits[0], splits[1], seeded_train_config(cfg), &meta);
  } catch (const tt::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  tt::save_checkpoint(*model, meta, (fs::path(out_dir) / "checkpoint").string());
  tt::save_training_log(log, (fs::path(out_dir) / "training_log.csv").string());
  std::cout << "trained " << tt::arch_name(cfg.model.arch) << " for " << log.size()
            << " epochs; best val loss " << meta.best_val_loss << " at epoch "
            << meta.best_epoch << "\n";
  return 0;
}

void save_line_plot(const std::vector<double>& xs, const std::vector<double>& ys,
                    const std::string& x_label, const std::string& path) {
  const int w = 640, h = 480, margin = 60;
  cv::Mat img(h, w, CV_8UC1, cv::Scalar(255));

  double xmin = xs.front(), xmax = xs.front(), ymin = ys.front(), ymax = ys.front();
  for (double v : xs) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
  for (double v : ys) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
  if (xmax - xmin < 1e-12) { xmin -= 0.5; xmax += 0.5; }
  if (ymax - ymin < 1e-12) { ymin -= 0.5; ymax += 0.5; }

  auto px = [&](double x, double y) {
    const int ix = margin + int((x - xmin) / (xmax - xmin) * (w - 2 * margin));
    const int iy = h - margin - int((y - ymin) / (ymax - ymin) * (h - 2 * margin));
    return cv::Point(ix, iy);
  };

  cv::line(img, {margin, h - margin}, {w - margin, h - margin}, cv::Scalar(0));
  cv::line(img, {margin, margin}, {margin, h - margin}, cv::Scalar(0));
  cv::putText(img, x_label, {w / 2 - 40, h - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              cv::Scalar(0));
  cv::putText(img, "mean MSD (px)", {5, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0));

  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", ymin);
  cv::putText(img, buf, {5, h - margin}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0));
  std::snprintf(buf, sizeof(buf), "%.3g", ymax);
  cv::putText(img, buf, {5, margin}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0));
  std::snprintf(buf, sizeof(buf), "%.3g", xmin);
  cv::putText(img, buf, {margin, h - margin + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0));
  std::snprintf(buf, sizeof(buf), "%.3g", xmax);
  cv::putText(img, buf, {w - margin - 20, h - margin + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
              cv::Scalar(0));

  for (std::size_t i = 0; i + 1 < xs.size(); ++i)
    cv::line(img, px(xs[i], ys[i]), px(xs[i + 1], ys[i + 1]), cv::Scalar(0), 2);
  for (std::size_t i = 0; i < xs.size(); ++i)
    cv::circle(img, px(xs[i], ys[i]), 4, cv::Scalar(0), cv::FILLED);

  if (!cv::imwrite(path, img)) throw std::runtime_error("cannot write " + path);
}

int run_experiment(const std::string& config_path, const std::string& out_dir) {
  AppConfig cfg;
  try {
    cfg = load_config(config_path);
    if (!cfg.sweep.present())
      throw std::runtime_error("experiment requires at least one sweep axis");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  fs::create_directories(out_dir);
  echo_config(cfg, out_dir);
  const auto splits = load_splits(cfg);

  // Absent axes collapse to the configured base value.
  const std::vector<std::string> losses =
      cfg.sweep.loss.empty() ? std::vector<std::string>{loss_kind_name(cfg.train.loss.kind)}
                             : cfg.sweep.loss;
  const std::vector<double> fractions =
      cfg.sweep.fraction.empty() ? std::vector<double>{1.0} : cfg.sweep.fraction;
  const std::vector<int> sizes = cfg.sweep.input_size.empty()
                                     ? std::vector<int>{cfg.model.input_size}
                                     : cfg.sweep.input_size;
  const std::vector<bool> augs =
      cfg.sweep.augmentation.empty()
          ? std::vector<bool>{cfg.train.augmentation.has_value()}
          : cfg.sweep.augmentation;

  std::ofstream csv(fs::path(out_dir) / "results.csv");
  csv << "loss,fraction,input_size,augmentation,mean_msd_px,std_msd_px,status\n";

  struct Row {
    std::string loss;
    double fraction;
    int input_size;
    bool augmentation;
    double mean = 0.0, stddev = 0.0;
    bool ok = false;
  };
  std::vector<Row> rows;

  for (const auto& loss_name : losses)
    for (double fraction : fractions)
      for (int input_size : sizes)
        for (bool aug : augs) {
          Row row{loss_name, fraction, input_size, aug};
          std::cout << "cell loss=" << loss_name << " fraction=" << fraction
                    << " input_size=" << input_size << " augmentation=" << (aug ? "on" : "off")
                    << std::endl;
          try {
            AppConfig cell = cfg;
            cell.train.loss.kind = loss_kind_from_name(loss_name);
            cell.model.input_size = input_size;
            if (aug && !cell.train.augmentation)
              cell.train.augmentation = tt::AugmentationConfig{};
            if (!aug) cell.train.augmentation.reset();

            const tt::Dataset train_set = tt::subsample_training(splits[0], fraction, cfg.seed);
            auto model = tt::build_model(seeded_model_spec(cell));
            tt::train(*model, train_set, splits[1], seeded_train_config(cell));

            tt::AggregateStats stats;
            eval_mean_msd(*model, splits[2], cell.postprocess, &stats);
            row.mean = stats.mean;
            row.stddev = stats.stddev;
            row.ok = true;
          } catch (const std::exception& e) {
            std::cerr << "cell failed: " << e.what() << "\n";
          }
          csv << row.loss << ',' << row.fraction << ',' << row.input_size << ','
              << (row.augmentation ? "on" : "off") << ',';
          if (row.ok)
            csv << row.mean << ',' << row.stddev << ",ok\n";
          else
            csv << ",,failed\n";
          csv.flush();
          rows.push_back(row);
        }

  // One plot per swept axis, averaging cells that share the axis value.
  auto plot_axis = [&](const std::string& name, auto key, const auto& axis_values) {
    if (axis_values.size() < 2) return;
    std::vector<double> xs, ys;
    for (const auto& v : axis_values) {
      double sum = 0.0;
      int n = 0;
      for (const Row& r : rows)
        if (r.ok && key(r) == double(v)) {
          sum += r.mean;
          ++n;
        }
      if (n > 0) {
        xs.push_back(double(v));
        ys.push_back(sum / n);
      }
    }
    if (xs.size() >= 2)
      save_line_plot(xs, ys, name, (fs::path(out_dir) / ("plot_" + name + ".png")).string());
  };
  plot_axis("fraction", [](const Row& r) { return r.fraction; }, fractions);
  plot_axis("input_size", [](const Row& r) { return double(r.input_size); }, sizes);
  if (losses.size() >= 2) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < losses.size(); ++i)
      for (const Row& r : rows)
        if (r.ok && r.loss == losses[i]) {
          xs.push_back(double(i));
          ys.push_back(r.mean);
        }
    if (xs.size() >= 2)
      save_line_plot(xs, ys, "loss", (fs::path(out_dir) / "plot_loss.png").string());
  }

  std::cout << "wrote " << rows.size() << " cells to results.csv\n";
  return 0;
}

}  // namespace ttcli
