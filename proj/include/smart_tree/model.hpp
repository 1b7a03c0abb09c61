#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace smart_tree {

using Point3 = Eigen::Vector3d;
using NodeId = std::int64_t;

/// Base class of every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an operation's input did not hold.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A file could not be decoded. `offset()` is the byte offset where decoding
/// failed (or the JSON path for skeleton documents, folded into the message).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit ParseError(const std::string& what) : Error(what), offset_(0) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Per-point ground truth: radius of the branch the point was sampled from,
/// unit direction from the point to its foot on the branch axis, and the id of
/// that branch.
struct GroundTruthLabel {
  double radius = 0.0;
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();
  int branch_id = -1;

  friend bool operator==(const GroundTruthLabel&, const GroundTruthLabel&) = default;
};

struct Color {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Color&, const Color&) = default;
};

struct PointCloud {
  std::vector<Point3> points;
  std::optional<std::vector<GroundTruthLabel>> labels;
  // Carried through I/O and downsampling only.
  std::optional<std::vector<Color>> colors;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool labelled() const { return labels.has_value(); }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

struct SkeletonNode {
  NodeId id = 0;
  Point3 position = Point3::Zero();
  double radius = 0.0;
  std::optional<NodeId> parent;

  friend bool operator==(const SkeletonNode&, const SkeletonNode&) = default;
};

/// A forest of radius-annotated nodes. `roots` lists the nodes without parent.
struct Skeleton {
  std::vector<SkeletonNode> nodes;
  std::vector<NodeId> roots;

  bool empty() const { return nodes.empty(); }

  friend bool operator==(const Skeleton&, const Skeleton&) = default;
};

inline double distance(const Point3& a, const Point3& b) { return (a - b).norm(); }

/// Throws InvalidInput unless every coordinate is finite and any label/color
/// list has one entry per point.
void check_cloud(const PointCloud& cloud);

/// Downsamples to at most one point per occupied cube of side `resolution`.
/// The kept point is the centroid of the cube's points; labels are averaged
/// (direction re-normalized, branch id by majority). Output is ordered by
/// voxel key, z-major then y then x.
PointCloud voxel_downsample(const PointCloud& cloud, double resolution);

/// Groups point indices by voxel, in the canonical output order of
/// voxel_downsample. Each group lists its members in ascending index order.
std::vector<std::vector<std::size_t>> voxel_groups(const std::vector<Point3>& points,
                                                   double resolution);

/// Returns one human-readable message per violated Skeleton invariant; empty
/// when the skeleton is a valid forest.
std::vector<std::string> skeleton_validate(const Skeleton& skeleton);

/// Rebuilds `roots` from the parent links (ascending id order).
void refresh_roots(Skeleton& skeleton);

/// Per-node branch id, parallel to `skeleton.nodes`. A branch starts at a root
/// or at a node that is not the continuation of its parent; at every node the
/// child with the largest radius (ties: smallest id) continues the branch. A
/// branch's id is the id of its first node. Requires a valid skeleton.
std::vector<NodeId> branch_ids(const Skeleton& skeleton);

}  // namespace smart_tree
