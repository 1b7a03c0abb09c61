#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "smart_tree/model.hpp"

namespace smart_tree {

/// A neighbor returned by a KdTree query: point index and Euclidean distance.
struct Neighbor {
  std::uint32_t index;
  double distance;
};

/// Static 3-d tree over a borrowed point array. Every query reports distances
/// computed as `distance(query, points[i])`, so results match a linear scan
/// bit for bit. Ties are always broken by the smaller point index.
///
/// Optional per-point weights enable `nearest_scaled`, the argmin of
/// distance / weight (weights must be positive).
class KdTree {
 public:
  explicit KdTree(std::span<const Point3> points, std::span<const double> weights = {},
                  std::size_t leaf_size = 12);

  std::size_t size() const { return points_.size(); }

  /// All points with distance strictly less than `radius`, ascending by index.
  void radius_search(const Point3& query, double radius, std::vector<Neighbor>& out) const;

  /// The `k` nearest points ordered by (distance, index).
  std::vector<Neighbor> knn(const Point3& query, std::size_t k) const;

  /// Nearest point (distance, then index). Requires a non-empty tree.
  Neighbor nearest(const Point3& query) const;

  /// Point minimizing distance / weight (ratio, then index). Requires weights.
  Neighbor nearest_scaled(const Point3& query) const;

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    std::uint32_t begin, end;
    std::int32_t left = -1, right = -1;
    double max_weight = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  double box_distance(const Node& node, const Point3& q) const;

  std::span<const Point3> points_;
  std::span<const double> weights_;
  std::size_t leaf_size_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace smart_tree
