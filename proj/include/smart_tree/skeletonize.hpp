#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smart_tree/estimate.hpp"
#include "smart_tree/model.hpp"

namespace smart_tree {

/// Whose radius bounds an edge of the neighborhood graph.
enum class AdmissionRule {
  Min,     // d < min(r_i, r_j)
  Max,     // d < max(r_i, r_j)
  Source,  // d < r_i from either endpoint, symmetrized by or-ing both directions
};

struct SkeletonizeConfig {
  AdmissionRule admission = AdmissionRule::Min;
  double allocation_factor = 1.0;
  int min_subgraph_points = 5;
  int min_path_nodes = 2;
  // 0 disables downsampling (the cloud is used as given).
  double voxel_resolution = 0.01;
};

void validate(const SkeletonizeConfig& config);

/// Medial points: each input point moved by its predicted radius along its
/// predicted direction.
struct MedialPoints {
  std::vector<Point3> positions;
  std::vector<double> radii;
};

/// Undirected weighted graph in compressed-row form. Neighbors of vertex `v`
/// occupy [offsets[v], offsets[v+1]) of `targets`/`weights`, ascending by target.
struct NeighborGraph {
  std::vector<Point3> positions;
  std::vector<double> radii;
  std::vector<std::uint64_t> offsets{0};
  std::vector<std::uint32_t> targets;
  std::vector<double> weights;

  std::size_t vertex_count() const { return positions.size(); }
  std::size_t edge_count() const { return targets.size() / 2; }
  std::span<const std::uint32_t> neighbors(std::size_t v) const {
    return {targets.data() + offsets[v], targets.data() + offsets[v + 1]};
  }
  std::span<const double> edge_weights(std::size_t v) const {
    return {weights.data() + offsets[v], weights.data() + offsets[v + 1]};
  }
};

using Component = std::vector<std::uint32_t>;

struct Components {
  std::vector<Component> kept;  // largest first, ties by smallest member
  Component residue;            // vertices of discarded components, ascending
};

struct ShortestPaths {
  std::vector<double> distance;          // +inf outside the component
  std::vector<std::int64_t> predecessor; // -1 for the root and outside vertices
};

struct SkeletonizeDiagnostics {
  std::size_t input_points = 0;
  std::size_t downsampled_points = 0;
  std::size_t edge_count = 0;
  std::size_t component_count = 0;  // components kept
  std::size_t residue_size = 0;
  std::size_t tree_count = 0;
  double downsample_ms = 0, estimate_ms = 0, project_ms = 0, graph_ms = 0, extract_ms = 0;
};

struct SkeletonizeResult {
  Skeleton skeleton;
  SkeletonizeDiagnostics diagnostics;
};

MedialPoints project_to_medial(const PointCloud& cloud, const MedialField& field);

NeighborGraph build_neighbor_graph(std::span<const Point3> positions, std::span<const double> radii,
                                   AdmissionRule rule);

Components connected_components(const NeighborGraph& graph, int min_subgraph_points = 1);

/// Lowest vertex (minimum z, ties by index).
std::uint32_t select_root(const Component& component, std::span<const Point3> positions);

/// Dijkstra from `root` restricted to `component` (ascending vertex list).
/// Among equal-length paths the smaller predecessor index wins.
ShortestPaths sssp(const NeighborGraph& graph, const Component& component, std::uint32_t root);

/// Greedy path extraction over one component. Node ids start at `first_id`
/// and are consecutive.
Skeleton extract_paths(const NeighborGraph& graph, const Component& component,
                       const ShortestPaths& paths, const SkeletonizeConfig& config,
                       NodeId first_id = 0);

/// Full pipeline: downsample, estimate, project, build the graph, then
/// extract one tree per kept component.
SkeletonizeResult skeletonize(const PointCloud& cloud, const Estimator& estimator,
                              const SkeletonizeConfig& config);

}  // namespace smart_tree
