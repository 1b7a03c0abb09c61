#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "smart_tree/model.hpp"

namespace smart_tree {

struct SkeletonSamples {
  std::vector<Point3> positions;
  std::vector<double> radii;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> precision;  // percent
  std::vector<double> recall;     // percent
  std::vector<double> f1;         // percent
  double precision_auc = 0.0;
  double recall_auc = 0.0;
  double f1_auc = 0.0;
};

/// Every node once, plus evenly spaced interior samples on each parent->child
/// edge so consecutive samples are at most `spacing` apart. Positions and
/// radii are linearly interpolated.
SkeletonSamples resample_skeleton(const Skeleton& skeleton, double spacing = 0.001);

/// Match of one sample to the other set: the index of the matched sample in
/// the other set, the Euclidean distance, and the ground-truth radius that
/// scales the threshold.
struct Match {
  std::uint32_t index;
  double distance;
  double gt_radius;
};

/// For every output sample, the ground-truth sample minimizing distance / gt
/// radius (ties: smaller index).
std::vector<Match> precision_matches(const SkeletonSamples& output, const SkeletonSamples& gt);

/// For every ground-truth sample, the Euclidean-nearest output sample (ties:
/// smaller index).
std::vector<Match> recall_matches(const SkeletonSamples& output, const SkeletonSamples& gt);

/// Percentage of matches with distance < t * gt_radius.
double matched_percent(const std::vector<Match>& matches, double t);

double precision(const SkeletonSamples& output, const SkeletonSamples& gt, double t);
double recall(const SkeletonSamples& output, const SkeletonSamples& gt, double t);
double f1(double precision_percent, double recall_percent);

/// Evaluates the curves at t = k / (steps - 1), k = 0..steps-1, and their
/// trapezoidal areas (curves scaled to [0, 1]).
EvalReport sweep_and_auc(const SkeletonSamples& output, const SkeletonSamples& gt,
                         int steps = 101);

/// Trapezoidal area under `values` (percent) over `thresholds`, divided by 100.
double auc(const std::vector<double>& thresholds, const std::vector<double>& values);

/// `t,precision,recall,f1` header plus one row per threshold.
void write_report_csv(std::ostream& out, const EvalReport& report);

/// Line plot of the three curves. Presentation only.
void write_report_svg(std::ostream& out, const EvalReport& report);

}  // namespace smart_tree
