#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "smart_tree/model.hpp"

namespace smart_tree {

/// Shape parameters of a procedurally generated tree. The trunk grows from
/// the origin along +z; every branch of generation g < depth spawns a
/// random number of children in `children_min..children_max`.
struct TreeParams {
  int depth = 3;
  double trunk_length = 2.0;
  double trunk_radius = 0.06;
  double length_decay = 0.6;
  double radius_decay = 0.75;
  double angle_min = 0.5;  // radians from the parent direction
  double angle_max = 1.0;
  int children_min = 2;
  int children_max = 3;
  std::uint64_t seed = 0;
};

struct AugmentParams {
  double noise_sigma = 0.0;
  double dropout_prob = 0.0;
  int occlusion_count = 0;
  double occlusion_radius = 0.15;
  std::uint64_t seed = 0;
  // Extra occluder centers applied in addition to the random ones.
  std::vector<Point3> occlusion_centers;
};

/// Throws InvalidInput when a field is out of range.
void validate(const TreeParams& params);
void validate(const AugmentParams& params);

/// Generates a single-root skeleton. Each branch is a straight polyline with
/// node spacing at most trunk_radius; radius tapers linearly along a branch
/// and side branches start at radius_decay times the radius where they attach.
Skeleton generate_skeleton(const TreeParams& params);

/// Samples points on the tube surface around every parent->child edge, with
/// `density` points per square meter on average. Labels carry the interpolated
/// radius, the unit direction to the axis foot and the branch id.
PointCloud sample_surface(const Skeleton& skeleton, double density, std::uint64_t seed);

/// Gaussian jitter, uniform dropout and spherical occlusion. Labels are kept
/// as-is (pre-noise ground truth).
PointCloud augment(const PointCloud& cloud, const AugmentParams& params);

/// Removes every branch (see branch_ids) whose maximum radius is below
/// `min_radius` or whose arc length is below `min_length`, along with
/// everything attached to it and the cloud points labelled with those
/// branches.
std::pair<Skeleton, PointCloud> prune_ground_truth(const Skeleton& skeleton,
                                                   const PointCloud& cloud, double min_radius,
                                                   double min_length);

}  // namespace smart_tree
