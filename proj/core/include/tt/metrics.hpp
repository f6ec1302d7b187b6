#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tt/contour.hpp"

namespace tt {

struct AggregateStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  double median = 0.0;
  double max = 0.0;
};

struct FrameScore {
  std::string frame_id;
  double msd_px = 0.0;
  std::optional<double> msd_mm;
};

struct EvalReport {
  std::vector<FrameScore> per_frame;
  AggregateStats aggregate_px;
  std::optional<AggregateStats> aggregate_mm;
  int n_failed = 0;  // frames with no detected contour; excluded from aggregates
};

// Symmetric mean nearest-point distance between two point sequences. With
// equal lengths n this is the 1/(2n) two-sided form; in general the sum is
// divided by |U| + |V|.
double msd(const Contour& u, const Contour& v);

AggregateStats summarize(std::span<const double> values);

struct AgreementMatrix {
  std::vector<std::string> annotators;
  std::vector<std::vector<std::pair<double, double>>> cells;  // (mean, std) MSD
};

// Pairwise inter-annotator MSD. Every annotator must cover the same frames
// in the same order (frame_ids are checked).
AgreementMatrix agreement_matrix(
    const std::map<std::string, std::vector<Contour>>& annotations);

EvalReport evaluate_contours(const std::vector<std::pair<Contour, Contour>>& pairs,
                             std::optional<double> px_per_mm, int n_failed = 0);

void save_report_csv(const EvalReport& report, const std::string& path);
void save_report_json(const EvalReport& report, const std::string& path);

}  // namespace tt
