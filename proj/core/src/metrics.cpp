#include "tt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace tt {

namespace {

double one_sided_sum(const Contour& from, const Contour& to) {
  double acc = 0.0;
  for (const auto& p : from.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to.points) {
      const double dx = p.x - q.x, dy = p.y - q.y;
      best = std::min(best, dx * dx + dy * dy);
    }
    acc += std::sqrt(best);
  }
  return acc;
}

}  // namespace

double msd(const Contour& u, const Contour& v) {
  if (u.points.empty() || v.points.empty()) throw std::invalid_argument("msd: empty contour");
  return (one_sided_sum(u, v) + one_sided_sum(v, u)) /
         static_cast<double>(u.points.size() + v.points.size());
}

AggregateStats summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: empty list");
  AggregateStats s;
  double acc = 0.0;
  for (double v : values) acc += v;
  s.mean = acc / values.size();
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / values.size());
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  s.max = sorted.back();
  return s;
}

AgreementMatrix agreement_matrix(
    const std::map<std::string, std::vector<Contour>>& annotations) {
  if (annotations.empty()) throw std::invalid_argument("agreement_matrix: no annotators");
  AgreementMatrix out;
  for (const auto& [name, _] : annotations) out.annotators.push_back(name);
  const auto& first = annotations.begin()->second;
  for (const auto& [name, contours] : annotations) {
    if (contours.size() != first.size())
      throw std::invalid_argument("agreement_matrix: frame-set size mismatch for " + name);
    for (std::size_t i = 0; i < contours.size(); ++i)
      if (contours[i].frame_id != first[i].frame_id)
        throw std::invalid_argument("agreement_matrix: frame-set mismatch for " + name);
  }
  const std::size_t k = out.annotators.size();
  out.cells.assign(k, std::vector<std::pair<double, double>>(k, {0.0, 0.0}));
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const auto& ca = annotations.at(out.annotators[a]);
      const auto& cb = annotations.at(out.annotators[b]);
      std::vector<double> dists;
      dists.reserve(ca.size());
      for (std::size_t i = 0; i < ca.size(); ++i) dists.push_back(msd(ca[i], cb[i]));
      const AggregateStats s = summarize(dists);
      out.cells[a][b] = {s.mean, s.stddev};
      out.cells[b][a] = {s.mean, s.stddev};
    }
  }
  return out;
}

EvalReport evaluate_contours(const std::vector<std::pair<Contour, Contour>>& pairs,
                             std::optional<double> px_per_mm, int n_failed) {
  EvalReport report;
  report.n_failed = n_failed;
  std::vector<double> px_scores, mm_scores;
  for (const auto& [pred, gold] : pairs) {
    FrameScore fs;
    fs.frame_id = gold.frame_id.empty() ? pred.frame_id : gold.frame_id;
    fs.msd_px = msd(pred, gold);
    px_scores.push_back(fs.msd_px);
    if (px_per_mm) {
      fs.msd_mm = px_to_mm(fs.msd_px, *px_per_mm);
      mm_scores.push_back(*fs.msd_mm);
    }
    report.per_frame.push_back(std::move(fs));
  }
  if (px_scores.empty()) throw std::invalid_argument("evaluate_contours: no frame pairs");
  report.aggregate_px = summarize(px_scores);
  if (!mm_scores.empty()) report.aggregate_mm = summarize(mm_scores);
  return report;
}

void save_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "frame_id,msd_px,msd_mm\n";
  f.precision(9);
  for (const auto& fs : report.per_frame) {
    f << fs.frame_id << "," << fs.msd_px << ",";
    if (fs.msd_mm) f << *fs.msd_mm;
    f << "\n";
  }
}

namespace {

nlohmann::json stats_to_json(const AggregateStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"median", s.median}, {"max", s.max}};
}

}  // namespace

void save_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::json j{{"n_frames", report.per_frame.size()},
                   {"n_failed", report.n_failed},
                   {"failed_frames_excluded_from_aggregates", true},
                   {"msd_px", stats_to_json(report.aggregate_px)}};
  if (report.aggregate_mm) j["msd_mm"] = stats_to_json(*report.aggregate_mm);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

}  // namespace tt
