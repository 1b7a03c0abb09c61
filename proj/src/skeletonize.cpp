#include "smart_tree/skeletonize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include <tbb/parallel_for.h>

#include "smart_tree/kdtree.hpp"

namespace smart_tree {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class Stopwatch {
 public:
  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

// Closest point parameter of `p` on segment a-b, clamped to [0, 1].
double segment_parameter(const Point3& p, const Point3& a, const Point3& b) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return 0.0;
  return std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
}

}  // namespace

void validate(const SkeletonizeConfig& config) {
  if (!(config.allocation_factor > 0.0)) throw InvalidInput("allocation_factor must be positive");
  if (config.min_subgraph_points < 1) throw InvalidInput("min_subgraph_points must be >= 1");
  if (config.min_path_nodes < 2) throw InvalidInput("min_path_nodes must be >= 2");
  if (!(config.voxel_resolution >= 0.0)) throw InvalidInput("voxel resolution must be >= 0");
}

MedialPoints project_to_medial(const PointCloud& cloud, const MedialField& field) {
  if (field.log_radius.size() != cloud.size() || field.direction.size() != cloud.size()) {
    throw InvalidInput("medial field length does not match the cloud");
  }
  MedialPoints out;
  out.positions.resize(cloud.size());
  out.radii.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double radius = std::exp(field.log_radius[i]);
    out.radii[i] = radius;
    out.positions[i] = cloud.points[i] + radius * field.direction[i];
  }
  return out;
}

NeighborGraph build_neighbor_graph(std::span<const Point3> positions, std::span<const double> radii,
                                   AdmissionRule rule) {
  if (positions.size() != radii.size()) {
    throw InvalidInput("positions and radii differ in length");
  }
  const std::size_t n = positions.size();
  NeighborGraph graph;
  graph.positions.assign(positions.begin(), positions.end());
  graph.radii.assign(radii.begin(), radii.end());
  graph.offsets.assign(n + 1, 0);
  if (n == 0) return graph;

  const KdTree tree(positions);
  // out-going candidates found from each vertex with its own radius
  std::vector<std::vector<Neighbor>> found(n);
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n, 256), [&](const auto& range) {
    std::vector<Neighbor> hits;
    for (std::size_t i = range.begin(); i != range.end(); ++i) {
      tree.radius_search(positions[i], radii[i], hits);
      auto& keep = found[i];
      keep.clear();
      for (const auto& h : hits) {
        if (h.index == i) continue;
        if (rule == AdmissionRule::Min && !(h.distance < radii[h.index])) continue;
        keep.push_back(h);
      }
      keep.shrink_to_fit();
    }
  });

  if (rule != AdmissionRule::Min) {
    // or both directions: j joins i's list when i found j or j found i
    std::vector<std::vector<Neighbor>> reverse(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& h : found[i]) {
        if (!(h.distance < radii[h.index])) {
          reverse[h.index].push_back({static_cast<std::uint32_t>(i), h.distance});
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (reverse[i].empty()) continue;
      auto& list = found[i];
      list.insert(list.end(), reverse[i].begin(), reverse[i].end());
      std::sort(list.begin(), list.end(),
                [](const Neighbor& a, const Neighbor& b) { return a.index < b.index; });
      std::vector<Neighbor>().swap(reverse[i]);
    }
  }

  for (std::size_t i = 0; i < n; ++i) graph.offsets[i + 1] = graph.offsets[i] + found[i].size();
  graph.targets.resize(graph.offsets[n]);
  graph.weights.resize(graph.offsets[n]);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t at = graph.offsets[i];
    for (const auto& h : found[i]) {
      graph.targets[at] = h.index;
      graph.weights[at] = h.distance;
      ++at;
    }
    std::vector<Neighbor>().swap(found[i]);
  }
  return graph;
}

Components connected_components(const NeighborGraph& graph, int min_subgraph_points) {
  const std::size_t n = graph.vertex_count();
  std::vector<bool> seen(n, false);
  std::vector<Component> all;
  std::vector<std::uint32_t> queue;
  for (std::size_t start = 0; start < n; ++start) {
    if (seen[start]) continue;
    Component comp;
    queue.assign(1, static_cast<std::uint32_t>(start));
    seen[start] = true;
    while (!queue.empty()) {
      const std::uint32_t v = queue.back();
      queue.pop_back();
      comp.push_back(v);
      for (std::uint32_t w : graph.neighbors(v)) {
        if (!seen[w]) {
          seen[w] = true;
          queue.push_back(w);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    all.push_back(std::move(comp));
  }
  // discovery order already sorts by smallest member; stable sort keeps it for ties
  std::stable_sort(all.begin(), all.end(),
                   [](const Component& a, const Component& b) { return a.size() > b.size(); });

  Components out;
  for (auto& comp : all) {
    if (comp.size() >= static_cast<std::size_t>(std::max(min_subgraph_points, 1))) {
      out.kept.push_back(std::move(comp));
    } else {
      out.residue.insert(out.residue.end(), comp.begin(), comp.end());
    }
  }
  std::sort(out.residue.begin(), out.residue.end());
  return out;
}

std::uint32_t select_root(const Component& component, std::span<const Point3> positions) {
  if (component.empty()) throw InvalidInput("cannot select a root in an empty component");
  std::uint32_t best = component.front();
  for (std::uint32_t v : component) {
    const double z = positions[v].z(), bz = positions[best].z();
    if (z < bz || (z == bz && v < best)) best = v;
  }
  return best;
}

ShortestPaths sssp(const NeighborGraph& graph, const Component& component, std::uint32_t root) {
  const std::size_t n = graph.vertex_count();
  if (!std::binary_search(component.begin(), component.end(), root)) {
    throw InvalidInput("root vertex is not part of the component");
  }
  std::vector<bool> member(n, false);
  for (std::uint32_t v : component) member[v] = true;

  ShortestPaths out;
  out.distance.assign(n, kInf);
  out.predecessor.assign(n, -1);
  std::vector<bool> settled(n, false);

  using Entry = std::pair<double, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  out.distance[root] = 0.0;
  heap.emplace(0.0, root);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (settled[u]) continue;
    settled[u] = true;
    const auto nbrs = graph.neighbors(u);
    const auto ws = graph.edge_weights(u);
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      const std::uint32_t v = nbrs[k];
      if (!member[v] || settled[v]) continue;
      const double nd = d + ws[k];
      if (nd < out.distance[v]) {
        out.distance[v] = nd;
        out.predecessor[v] = u;
        heap.emplace(nd, v);
      } else if (nd == out.distance[v] && u < out.predecessor[v]) {
        out.predecessor[v] = u;
      }
    }
  }
  return out;
}

Skeleton extract_paths(const NeighborGraph& graph, const Component& component,
                       const ShortestPaths& paths, const SkeletonizeConfig& config,
                       NodeId first_id) {
  validate(config);
  Skeleton skeleton;
  if (component.empty()) return skeleton;
  const std::size_t m = component.size();

  std::vector<Point3> local_positions(m);
  for (std::size_t i = 0; i < m; ++i) local_positions[i] = graph.positions[component[i]];
  const KdTree tree(local_positions);
  auto local_of = [&](std::int64_t v) {
    return static_cast<std::size_t>(
        std::lower_bound(component.begin(), component.end(), static_cast<std::uint32_t>(v)) -
        component.begin());
  };

  // candidates: farthest first, ties by smaller index
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double da = paths.distance[component[a]], db = paths.distance[component[b]];
    if (da != db) return da > db;
    return a < b;
  });

  std::vector<bool> allocated(m, false);
  std::vector<NodeId> owner(m, -1);
  std::size_t remaining = m;
  NodeId next_id = first_id;

  std::vector<std::size_t> walk;
  std::vector<Neighbor> hits;
  std::vector<double> best_distance(m, kInf);
  std::vector<std::size_t> touched;

  for (std::size_t cursor = 0; remaining > 0 && cursor < m; ++cursor) {
    const std::size_t tip = order[cursor];
    if (allocated[tip]) continue;

    // trace back to the root or the first allocated vertex
    walk.clear();
    std::int64_t junction = -1;
    for (std::int64_t v = component[tip]; v >= 0; v = paths.predecessor[v]) {
      const std::size_t lv = local_of(v);
      if (allocated[lv]) {
        junction = static_cast<std::int64_t>(lv);
        break;
      }
      walk.push_back(lv);
    }
    std::reverse(walk.begin(), walk.end());  // near end first

    const std::optional<NodeId> attach =
        junction >= 0 && owner[junction] >= 0 ? std::optional<NodeId>(owner[junction])
                                              : std::nullopt;
    const bool emit = walk.size() >= static_cast<std::size_t>(config.min_path_nodes);
    std::vector<NodeId> node_of(walk.size(), -1);
    if (emit) {
      std::optional<NodeId> parent = attach;
      for (std::size_t k = 0; k < walk.size(); ++k) {
        SkeletonNode node;
        node.id = next_id++;
        node.position = local_positions[walk[k]];
        node.radius = graph.radii[component[walk[k]]];
        node.parent = parent;
        parent = node.id;
        node_of[k] = node.id;
        skeleton.nodes.push_back(node);
      }
    }
    const NodeId fallback_owner = attach.value_or(-1);

    for (std::size_t k = 0; k < walk.size(); ++k) {
      allocated[walk[k]] = true;
      owner[walk[k]] = emit ? node_of[k] : fallback_owner;
      --remaining;
    }

    // sweep every path segment (or the lone vertex) for vertices it explains
    touched.clear();
    const std::size_t segments = walk.size() > 1 ? walk.size() - 1 : 1;
    for (std::size_t s = 0; s < segments; ++s) {
      const std::size_t ia = walk[s], ib = walk[std::min(s + 1, walk.size() - 1)];
      const Point3& a = local_positions[ia];
      const Point3& b = local_positions[ib];
      const double ra = graph.radii[component[ia]], rb = graph.radii[component[ib]];
      const Point3 mid = 0.5 * (a + b);
      const double reach = 0.5 * distance(a, b) + config.allocation_factor * std::max(ra, rb);
      tree.radius_search(mid, reach * (1.0 + 1e-9) + 1e-12, hits);
      for (const auto& h : hits) {
        if (allocated[h.index]) continue;
        const Point3& p = local_positions[h.index];
        const double t = segment_parameter(p, a, b);
        const double d = distance(p, a + t * (b - a));
        const double limit = config.allocation_factor * (ra + (rb - ra) * t);
        if (d > limit) continue;
        if (best_distance[h.index] == kInf) touched.push_back(h.index);
        // own by the nearer segment endpoint
        const std::size_t k = t <= 0.5 ? s : std::min(s + 1, walk.size() - 1);
        const double dn = distance(p, local_positions[walk[k]]);
        if (dn < best_distance[h.index]) {
          best_distance[h.index] = dn;
          owner[h.index] = emit ? node_of[k] : fallback_owner;
        }
      }
    }
    std::sort(touched.begin(), touched.end());
    for (std::size_t v : touched) {
      allocated[v] = true;
      best_distance[v] = kInf;
      --remaining;
    }
  }

  refresh_roots(skeleton);
  return skeleton;
}

SkeletonizeResult skeletonize(const PointCloud& cloud, const Estimator& estimator,
                              const SkeletonizeConfig& config) {
  validate(config);
  if (cloud.empty()) throw InvalidInput("cannot skeletonize an empty cloud");
  check_cloud(cloud);

  SkeletonizeResult result;
  auto& diag = result.diagnostics;
  diag.input_points = cloud.size();
  Stopwatch clock;

  const PointCloud sampled =
      config.voxel_resolution > 0.0 ? voxel_downsample(cloud, config.voxel_resolution) : cloud;
  diag.downsampled_points = sampled.size();
  diag.downsample_ms = clock.lap_ms();
  if (sampled.empty()) throw InvalidInput("cloud is empty after downsampling");

  const MedialField field = estimator(sampled);
  check_field(field, sampled.size());
  diag.estimate_ms = clock.lap_ms();

  const MedialPoints medial = project_to_medial(sampled, field);
  diag.project_ms = clock.lap_ms();

  const NeighborGraph graph = build_neighbor_graph(medial.positions, medial.radii, config.admission);
  diag.edge_count = graph.edge_count();
  const Components components = connected_components(graph, config.min_subgraph_points);
  diag.component_count = components.kept.size();
  diag.residue_size = components.residue.size();
  diag.graph_ms = clock.lap_ms();

  std::vector<Skeleton> trees(components.kept.size());
  tbb::parallel_for(std::size_t{0}, trees.size(), [&](std::size_t c) {
    const Component& comp = components.kept[c];
    const std::uint32_t root = select_root(comp, graph.positions);
    const ShortestPaths paths = sssp(graph, comp, root);
    trees[c] = extract_paths(graph, comp, paths, config, 0);
  });

  // renumber so ids are consecutive across the forest in component order
  NodeId offset = 0;
  for (auto& tree : trees) {
    for (auto& node : tree.nodes) {
      node.id += offset;
      if (node.parent) *node.parent += offset;
      result.skeleton.nodes.push_back(node);
    }
    offset += static_cast<NodeId>(tree.nodes.size());
    if (!tree.nodes.empty()) ++diag.tree_count;
  }
  refresh_roots(result.skeleton);
  diag.extract_ms = clock.lap_ms();
  return result;
}

}  // namespace smart_tree
