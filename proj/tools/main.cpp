#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "app.hpp"
#include "tt/metrics.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> list_sorted(const fs::path& dir, std::initializer_list<std::string> exts) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (std::find(exts.begin(), exts.end(), ext) != exts.end()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_overlay(const tt::Heatmap& frame, const tt::Contour& contour,
                   const std::string& path) {
  cv::Mat img(frame.height, frame.width, CV_8UC1);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      img.at<std::uint8_t>(y, x) = cv::saturate_cast<std::uint8_t>(255.0f * frame.at(x, y));
  std::vector<cv::Point> poly;
  for (const auto& p : contour.points)
    poly.emplace_back(int(std::lround(p.x)), int(std::lround(p.y)));
  cv::polylines(img, poly, false, cv::Scalar(255), 1);
  cv::imwrite(path, img);
}

int cmd_extract(const std::string& checkpoint, const std::string& frames_dir,
                const std::string& out_dir, const tt::PostprocessConfig& post, bool overlay) {
  std::unique_ptr<tt::Model> model;
  try {
    model = tt::load_checkpoint(checkpoint);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::vector<fs::path> frames;
  try {
    frames = list_sorted(frames_dir, {".png"});
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (frames.empty()) {
    std::cerr << "error: no .png frames in " << frames_dir << "\n";
    return 2;
  }

  fs::create_directories(out_dir);
  std::ofstream failures(fs::path(out_dir) / "failures.csv");
  failures << "frame,reason\n";

  const int in = model->spec.input_size;
  int ok = 0, failed = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& path : frames) {
    const std::string stem = path.stem().string();
    try {
      const tt::Heatmap frame = tt::load_heatmap_png(path.string());
      const tt::Heatmap heat = tt::predict_heatmap(*model, tt::resize_frame(frame, in, in));
      tt::Contour contour = tt::extract_contour(heat, post);
      contour = tt::scale_contour(contour, double(frame.width) / in, double(frame.height) / in);
      contour.frame_id = stem;
      tt::save_contour_csv(contour, (fs::path(out_dir) / (stem + ".csv")).string());
      if (overlay)
        write_overlay(frame, contour, (fs::path(out_dir) / (stem + "_overlay.png")).string());
      ++ok;
    } catch (const std::exception& e) {
      failures << stem << ",\"" << e.what() << "\"\n";
      ++failed;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "extracted " << ok << "/" << frames.size() << " frames (" << failed
            << " failed); throughput " << (frames.size() / std::max(secs, 1e-9))
            << " frames/s\n";
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gold_dir,
             const std::string& out_dir, double px_per_mm_flag) {
  auto load_dir = [](const std::string& dir) {
    std::map<std::string, tt::Contour> out;
    for (const auto& p : list_sorted(dir, {".csv", ".json"})) {
      if (p.filename() == "failures.csv") continue;  // extract's bookkeeping, not a contour
      out[p.stem().string()] = tt::load_contour(p.string());
    }
    return out;
  };

  std::map<std::string, tt::Contour> pred, gold;
  try {
    pred = load_dir(pred_dir);
    gold = load_dir(gold_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  std::vector<std::pair<tt::Contour, tt::Contour>> pairs;
  int n_failed = 0;
  std::optional<double> px_per_mm;
  if (px_per_mm_flag > 0.0) px_per_mm = px_per_mm_flag;
  for (const auto& [stem, g] : gold) {
    const auto it = pred.find(stem);
    if (it == pred.end()) {
      ++n_failed;  // annotated frame with no prediction (extraction failure)
      continue;
    }
    tt::Contour p = it->second;
    tt::Contour gc = g;
    p.frame_id = gc.frame_id = stem;
    if (!px_per_mm && gc.px_per_mm) px_per_mm = gc.px_per_mm;
    pairs.emplace_back(std::move(p), std::move(gc));
  }
  if (pairs.empty()) {
    std::cerr << "error: no overlapping frames between " << pred_dir << " and " << gold_dir
              << "\n";
    return 2;
  }

  const tt::EvalReport report = tt::evaluate_contours(pairs, px_per_mm, n_failed);
  fs::create_directories(out_dir);
  tt::save_report_csv(report, (fs::path(out_dir) / "per_frame.csv").string());
  tt::save_report_json(report, (fs::path(out_dir) / "aggregate.json").string());
  std::cout << "frames " << report.per_frame.size() << " (" << report.n_failed
            << " missing); mean MSD " << report.aggregate_px.mean << " px";
  if (report.aggregate_mm) std::cout << " = " << report.aggregate_mm->mean << " mm";
  std::cout << "\n";
  return 0;
}

int cmd_synth(const tt::SyntheticConfig& cfg, const std::string& out_dir) {
  try {
    const tt::Dataset ds = tt::generate_synthetic(cfg);
    tt::save_dataset(ds, out_dir);
    std::cout << "wrote " << ds.items.size() << " frames to " << out_dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tonguetrack: tongue contour extraction from ultrasound frames"};
  app.require_subcommand(1);

  std::string config_path, out_dir;

  auto* train = app.add_subcommand("train", "train a model from a JSON config");
  train->add_option("--config", config_path, "experiment config (JSON)")->required();
  train->add_option("--out", out_dir, "output directory")->required();

  auto* experiment = app.add_subcommand("experiment", "run a sweep defined in a JSON config");
  experiment->add_option("--config", config_path, "experiment config (JSON)")->required();
  experiment->add_option("--out", out_dir, "output directory")->required();

  std::string checkpoint, frames_dir;
  tt::PostprocessConfig post;
  bool overlay = false;
  auto* extract = app.add_subcommand("extract", "extract contours from a directory of frames");
  extract->add_option("--checkpoint", checkpoint, "checkpoint base path (no extension)")
      ->required();
  extract->add_option("--frames", frames_dir, "directory of .png frames")->required();
  extract->add_option("--out", out_dir, "output directory")->required();
  extract->add_option("--threshold", post.threshold, "binarization threshold");
  extract->add_option("--smoothing", post.spline_smoothing,
                      "spline smoothing factor (< 0: one per point)");
  extract->add_option("--n-points", post.n_points, "points per output contour");
  extract->add_flag("--overlay", overlay, "also write QC overlay images");

  std::string pred_dir, gold_dir;
  double px_per_mm = 0.0;
  auto* eval = app.add_subcommand("eval", "score predicted contours against gold annotations");
  eval->add_option("--pred", pred_dir, "directory of predicted contours")->required();
  eval->add_option("--gold", gold_dir, "directory of gold contours")->required();
  eval->add_option("--out", out_dir, "output directory")->required();
  eval->add_option("--px-per-mm", px_per_mm, "pixel pitch (default: taken from gold files)");

  tt::SyntheticConfig synth_cfg;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--n-frames", synth_cfg.n_frames, "number of frames");
  synth->add_option("--image-size", synth_cfg.image_size, "square frame size in px");
  synth->add_option("--noise", synth_cfg.noise, "speckle strength");
  synth->add_option("--distractors", synth_cfg.distractor_edges, "distractor arcs per frame");
  synth->add_option("--seed", synth_cfg.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are an invalid-config error
  }

  try {
    if (*train) return ttcli::run_train(config_path, out_dir);
    if (*experiment) return ttcli::run_experiment(config_path, out_dir);
    if (*extract) return cmd_extract(checkpoint, frames_dir, out_dir, post, overlay);
    if (*eval) return cmd_eval(pred_dir, gold_dir, out_dir, px_per_mm);
    if (*synth) return cmd_synth(synth_cfg, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
