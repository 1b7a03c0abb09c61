#pragma once

#include <functional>
#include <span>
#include <vector>

#include "smart_tree/model.hpp"

namespace smart_tree {

/// Per-point medial prediction: natural log of the radius (meters) and a unit
/// direction from the point toward the medial axis.
struct MedialField {
  std::vector<double> log_radius;
  std::vector<Eigen::Vector3d> direction;

  std::size_t size() const { return log_radius.size(); }
  friend bool operator==(const MedialField&, const MedialField&) = default;
};

struct EstimatorReport {
  double radius_loss = 0.0;
  double direction_loss = 0.0;
  double total_loss = 0.0;
};

/// Anything that maps a cloud to a medial field of the same length. This is
/// the seat of the learned network; externally predicted fields plug in via
/// `injected_estimator`.
using Estimator = std::function<MedialField(const PointCloud&)>;

/// Throws InvalidInput unless the field has one finite entry per point and
/// unit directions.
void check_field(const MedialField& field, std::size_t expected_size);

/// Reads the ground-truth labels back as a prediction.
MedialField oracle_estimate(const PointCloud& cloud);

/// Label-free geometric estimate. For each point the inward surface normal is
/// taken from the k-neighborhood (PCA normal, oriented toward the neighborhood
/// centroid); the point is then shifted along it to the center of the largest
/// empty ball touching the point, refining the ball for `iterations` rounds.
/// The shift vector gives direction and radius (floored at 1e-4 m).
MedialField baseline_estimate(const PointCloud& cloud, int k, int iterations);

/// Wraps a precomputed field; the estimator rejects clouds of another size.
Estimator injected_estimator(MedialField field);

/// Mean of 1 - cos(angle) between predicted and ground-truth directions.
double direction_loss(const MedialField& pred, std::span<const GroundTruthLabel> gt);

/// Mean of |ln(gt radius) - predicted log radius|.
double radius_loss(const MedialField& pred, std::span<const GroundTruthLabel> gt);

EstimatorReport total_loss(const MedialField& pred, std::span<const GroundTruthLabel> gt);

/// Averages a field over the same voxel groups voxel_downsample uses, so an
/// injected prediction can follow its cloud through downsampling.
MedialField voxel_downsample_field(const PointCloud& cloud, const MedialField& field,
                                   double resolution);

}  // namespace smart_tree
