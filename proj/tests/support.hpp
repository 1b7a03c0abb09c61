#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "smart_tree/model.hpp"
#include "smart_tree/synth.hpp"

namespace smart_tree::testing {

/// Two-node vertical skeleton along the z axis.
inline Skeleton cylinder_skeleton(double radius, double length) {
  Skeleton s;
  s.nodes.push_back({0, Point3(0, 0, 0), radius, std::nullopt});
  s.nodes.push_back({1, Point3(0, 0, length), radius, 0});
  s.roots = {0};
  return s;
}

/// Labelled cylinder cloud, radius `radius`, from z = 0 to z = length.
inline PointCloud cylinder_cloud(double radius, double length, double density,
                                 std::uint64_t seed = 1) {
  return sample_surface(cylinder_skeleton(radius, length), density, seed);
}

inline Point3 random_point(std::mt19937_64& rng, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  return {u(rng), u(rng), u(rng)};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("smart_tree_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Distance from `p` to the segment a-b.
inline double segment_distance(const Point3& p, const Point3& a, const Point3& b) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace smart_tree::testing
