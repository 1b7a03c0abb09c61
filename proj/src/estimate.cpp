#include "smart_tree/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <tbb/parallel_for.h>

#include "smart_tree/kdtree.hpp"

namespace smart_tree {

namespace {

constexpr double kRadiusFloor = 1e-4;
constexpr double kZeroShift = 1e-9;

void check_lengths(const MedialField& pred, std::span<const GroundTruthLabel> gt) {
  if (pred.log_radius.size() != gt.size() || pred.direction.size() != gt.size()) {
    throw InvalidInput("prediction and ground truth differ in length");
  }
}

// Radius of the ball tangent at `p` with inward normal `n` that passes through `q`.
double tangent_ball_radius(const Point3& p, const Eigen::Vector3d& n, const Point3& q) {
  const Eigen::Vector3d pq = q - p;
  const double along = n.dot(pq);
  if (along <= 0.0) return std::numeric_limits<double>::infinity();
  return pq.squaredNorm() / (2.0 * along);
}

}  // namespace

void check_field(const MedialField& field, std::size_t expected_size) {
  if (field.log_radius.size() != expected_size || field.direction.size() != expected_size) {
    throw InvalidInput("medial field size does not match the cloud");
  }
  for (std::size_t i = 0; i < expected_size; ++i) {
    if (!std::isfinite(field.log_radius[i])) {
      throw InvalidInput("medial field has a non-finite log radius at point " + std::to_string(i));
    }
    if (!field.direction[i].allFinite() || std::abs(field.direction[i].norm() - 1.0) > 1e-6) {
      throw InvalidInput("medial field direction is not unit length at point " +
                         std::to_string(i));
    }
  }
}

MedialField oracle_estimate(const PointCloud& cloud) {
  if (!cloud.labelled()) throw InvalidInput("oracle estimator needs a labelled cloud");
  check_cloud(cloud);
  MedialField field;
  field.log_radius.reserve(cloud.size());
  field.direction.reserve(cloud.size());
  for (const auto& label : *cloud.labels) {
    if (!(label.radius > 0.0)) throw InvalidInput("ground-truth radius must be positive");
    field.log_radius.push_back(std::log(label.radius));
    field.direction.push_back(label.direction);
  }
  return field;
}

MedialField baseline_estimate(const PointCloud& cloud, int k, int iterations) {
  if (k < 3) throw InvalidInput("baseline estimator needs k >= 3");
  if (iterations < 1) throw InvalidInput("baseline estimator needs iterations >= 1");
  if (cloud.size() < static_cast<std::size_t>(k) + 1) {
    throw InvalidInput("baseline estimator needs at least k + 1 points");
  }
  check_cloud(cloud);

  const auto& pts = cloud.points;
  const KdTree tree(pts);
  Eigen::Vector3d lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double initial_radius = std::max((hi - lo).norm(), kRadiusFloor);

  MedialField field;
  field.log_radius.resize(pts.size());
  field.direction.resize(pts.size());

  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, pts.size()), [&](const auto& range) {
    for (std::size_t i = range.begin(); i != range.end(); ++i) {
      const Point3& p = pts[i];
      // k neighbors besides the point itself
      const auto hood = tree.knn(p, static_cast<std::size_t>(k) + 1);

      Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
      for (const auto& nb : hood) centroid += pts[nb.index];
      centroid /= static_cast<double>(hood.size());
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      for (const auto& nb : hood) {
        const Eigen::Vector3d d = pts[nb.index] - centroid;
        cov += d * d.transpose();
      }

      Eigen::Vector3d shift = Eigen::Vector3d::Zero();
      if (cov.trace() > 0.0) {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        Eigen::Vector3d normal = eig.eigenvectors().col(0);
        if (normal.dot(centroid - p) < 0.0) normal = -normal;

        // shrink the tangent ball until it holds no other point
        double radius = initial_radius;
        for (int it = 0; it < iterations; ++it) {
          const Point3 center = p + radius * normal;
          const auto near = tree.knn(center, 1).front();
          const Point3& q = pts[near.index];
          if (distance(q, p) == 0.0 || near.distance >= radius * (1.0 - 1e-9)) break;
          const double next = tangent_ball_radius(p, normal, q);
          if (!(next < radius)) break;
          radius = next;
        }
        if (radius < initial_radius) shift = radius * normal;
      }

      const double magnitude = shift.norm();
      if (magnitude < kZeroShift) {
        field.direction[i] = Eigen::Vector3d::UnitZ();
      } else {
        field.direction[i] = shift / magnitude;
      }
      field.log_radius[i] = std::log(std::max(magnitude, kRadiusFloor));
    }
  });
  return field;
}

Estimator injected_estimator(MedialField field) {
  return [field = std::move(field)](const PointCloud& cloud) {
    check_field(field, cloud.size());
    return field;
  };
}

double direction_loss(const MedialField& pred, std::span<const GroundTruthLabel> gt) {
  check_lengths(pred, gt);
  if (gt.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto& p = pred.direction[i];
    const auto& g = gt[i].direction;
    double pp = 0.0, gg = 0.0, gp = 0.0;
    for (int a = 0; a < 3; ++a) {
      pp += p[a] * p[a];
      gg += g[a] * g[a];
      gp += g[a] * p[a];
    }
    if (!(pp > 0.0)) throw InvalidInput("zero-norm predicted direction at point " + std::to_string(i));
    if (!(gg > 0.0)) throw InvalidInput("zero-norm ground-truth direction at point " + std::to_string(i));
    // sqrt(gg * pp) rounds back to gg exactly when p == g, so equal
    // directions score exactly zero
    const double cosine = std::clamp(gp / std::sqrt(gg * pp), -1.0, 1.0);
    sum += 1.0 - cosine;
  }
  return sum / static_cast<double>(gt.size());
}

double radius_loss(const MedialField& pred, std::span<const GroundTruthLabel> gt) {
  check_lengths(pred, gt);
  if (gt.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!(gt[i].radius > 0.0)) throw InvalidInput("non-positive ground-truth radius at point " + std::to_string(i));
    sum += std::abs(std::log(gt[i].radius) - pred.log_radius[i]);
  }
  return sum / static_cast<double>(gt.size());
}

EstimatorReport total_loss(const MedialField& pred, std::span<const GroundTruthLabel> gt) {
  EstimatorReport report;
  report.radius_loss = radius_loss(pred, gt);
  report.direction_loss = direction_loss(pred, gt);
  report.total_loss = report.radius_loss + report.direction_loss;
  return report;
}

MedialField voxel_downsample_field(const PointCloud& cloud, const MedialField& field,
                                   double resolution) {
  check_field(field, cloud.size());
  MedialField out;
  for (const auto& group : voxel_groups(cloud.points, resolution)) {
    if (group.size() == 1) {
      out.log_radius.push_back(field.log_radius[group.front()]);
      out.direction.push_back(field.direction[group.front()]);
      continue;
    }
    double log_sum = 0.0;
    Eigen::Vector3d dir = Eigen::Vector3d::Zero();
    for (std::size_t i : group) {
      log_sum += field.log_radius[i];
      dir += field.direction[i];
    }
    out.log_radius.push_back(log_sum / static_cast<double>(group.size()));
    const double norm = dir.norm();
    out.direction.push_back(norm > 1e-12 ? Eigen::Vector3d(dir / norm)
                                         : field.direction[group.front()]);
  }
  return out;
}

}  // namespace smart_tree
