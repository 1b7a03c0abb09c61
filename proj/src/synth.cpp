#include "smart_tree/synth.hpp"

#include <cmath>
#include <deque>
#include <numbers>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace smart_tree {

namespace {

Eigen::Vector3d any_perpendicular(const Eigen::Vector3d& d) {
  const Eigen::Vector3d helper =
      std::abs(d.z()) < 0.9 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX();
  return d.cross(helper).normalized();
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct PendingBranch {
  std::size_t attach;  // index into nodes of the parent-branch node
  Eigen::Vector3d direction;
  double length;
  double base_radius;
  int generation;
};

}  // namespace

void validate(const TreeParams& p) {
  if (p.depth < 0) throw InvalidInput("depth must be >= 0");
  if (!(p.trunk_length > 0.0)) throw InvalidInput("trunk_length must be positive");
  if (!(p.trunk_radius > 0.0)) throw InvalidInput("trunk_radius must be positive");
  if (!(p.length_decay > 0.0 && p.length_decay < 1.0)) {
    throw InvalidInput("length_decay must lie in (0, 1)");
  }
  if (!(p.radius_decay > 0.0 && p.radius_decay < 1.0)) {
    throw InvalidInput("radius_decay must lie in (0, 1)");
  }
  if (!(p.angle_min > 0.0 && p.angle_min <= p.angle_max && p.angle_max < std::numbers::pi / 2)) {
    throw InvalidInput("branch angle range must satisfy 0 < min <= max < pi/2");
  }
  if (p.children_min < 0 || p.children_max < p.children_min) {
    throw InvalidInput("children range must satisfy 0 <= min <= max");
  }
}

void validate(const AugmentParams& p) {
  if (!(p.noise_sigma >= 0.0)) throw InvalidInput("noise_sigma must be >= 0");
  if (!(p.dropout_prob >= 0.0 && p.dropout_prob <= 1.0)) {
    throw InvalidInput("dropout_prob must lie in [0, 1]");
  }
  if (p.occlusion_count < 0) throw InvalidInput("occlusion_count must be >= 0");
  if (!(p.occlusion_radius >= 0.0)) throw InvalidInput("occlusion_radius must be >= 0");
}

Skeleton generate_skeleton(const TreeParams& params) {
  validate(params);
  std::mt19937_64 rng(params.seed);
  Skeleton skeleton;
  auto& nodes = skeleton.nodes;
  const double spacing = params.trunk_radius;

  // Emits one branch. `attach` is the parent-branch node the branch grows
  // from; for the trunk a root node is created instead.
  auto emit_branch = [&](std::optional<std::size_t> attach, const Point3& origin,
                         const Eigen::Vector3d& dir, double length, double base_radius) {
    const int segments = std::max(1, static_cast<int>(std::ceil(length / spacing)));
    const double tip_radius = base_radius * params.radius_decay;
    std::vector<std::size_t> indices;
    std::optional<NodeId> parent;
    if (attach) {
      parent = nodes[*attach].id;
      indices.push_back(*attach);
    }
    for (int k = attach ? 1 : 0; k <= segments; ++k) {
      const double s = static_cast<double>(k) / segments;
      SkeletonNode node;
      node.id = static_cast<NodeId>(nodes.size());
      node.position = origin + (s * length) * dir;
      node.radius = base_radius + (tip_radius - base_radius) * s;
      node.parent = parent;
      parent = node.id;
      indices.push_back(nodes.size());
      nodes.push_back(node);
    }
    return indices;
  };

  std::deque<std::pair<PendingBranch, std::vector<std::size_t>>> queue;
  {
    auto trunk = emit_branch(std::nullopt, Point3::Zero(), Eigen::Vector3d::UnitZ(),
                             params.trunk_length, params.trunk_radius);
    queue.push_back({PendingBranch{0, Eigen::Vector3d::UnitZ(), params.trunk_length,
                                   params.trunk_radius, 0},
                     std::move(trunk)});
  }

  while (!queue.empty()) {
    auto [branch, indices] = std::move(queue.front());
    queue.pop_front();
    if (branch.generation >= params.depth) continue;
    // children attach to interior nodes only, so the parent continues past them
    if (indices.size() < 3) continue;

    const int count = std::uniform_int_distribution<int>(params.children_min,
                                                         params.children_max)(rng);
    const Eigen::Vector3d u = any_perpendicular(branch.direction);
    const Eigen::Vector3d v = branch.direction.cross(u);
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    for (int c = 0; c < count; ++c) {
      const double along = uniform(rng, 0.3, 0.9);
      const auto slot = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::lround(along * (indices.size() - 1))), 1,
          indices.size() - 2);
      const std::size_t attach = indices[slot];
      const std::size_t next = indices[slot + 1];

      const double angle = uniform(rng, params.angle_min, params.angle_max);
      const double azimuth =
          phase + 2.0 * std::numbers::pi * c / count + uniform(rng, -0.3, 0.3);
      const Eigen::Vector3d dir =
          (std::cos(angle) * branch.direction +
           std::sin(angle) * (std::cos(azimuth) * u + std::sin(azimuth) * v))
              .normalized();
      const double length = branch.length * params.length_decay * uniform(rng, 0.8, 1.0);

      // The side branch must stay thinner than the parent's continuation so
      // that the parent remains the main axis through the junction.
      double base = params.radius_decay * nodes[attach].radius;
      const int segments = std::max(1, static_cast<int>(std::ceil(length / spacing)));
      const double first = base * (1.0 - (1.0 - params.radius_decay) / segments);
      if (first >= nodes[next].radius) base *= 0.999 * nodes[next].radius / first;

      auto child = emit_branch(attach, nodes[attach].position, dir, length, base);
      queue.push_back({PendingBranch{attach, dir, length, base, branch.generation + 1},
                       std::move(child)});
    }
  }

  refresh_roots(skeleton);
  return skeleton;
}

PointCloud sample_surface(const Skeleton& skeleton, double density, std::uint64_t seed) {
  if (skeleton.empty()) throw InvalidInput("cannot sample an empty skeleton");
  if (!(density > 0.0) || !std::isfinite(density)) throw InvalidInput("density must be positive");
  if (auto v = skeleton_validate(skeleton); !v.empty()) throw InvalidInput(v.front());

  std::unordered_map<NodeId, std::size_t> index;
  for (std::size_t i = 0; i < skeleton.nodes.size(); ++i) index.emplace(skeleton.nodes[i].id, i);
  const auto branch = branch_ids(skeleton);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud cloud;
  auto& labels = cloud.labels.emplace();

  for (std::size_t i = 0; i < skeleton.nodes.size(); ++i) {
    const auto& child = skeleton.nodes[i];
    if (!child.parent) continue;
    const auto& parent = skeleton.nodes[index.at(*child.parent)];
    const Eigen::Vector3d axis = child.position - parent.position;
    const double length = axis.norm();
    if (length == 0.0) continue;
    const Eigen::Vector3d dir = axis / length;
    const Eigen::Vector3d e1 = any_perpendicular(dir);
    const Eigen::Vector3d e2 = dir.cross(e1);
    const double r0 = parent.radius, r1 = child.radius;
    const double area = std::numbers::pi * (r0 + r1) * length;
    const double r_max = std::max(r0, r1);

    const long count = std::poisson_distribution<long>(density * area)(rng);
    for (long k = 0; k < count; ++k) {
      // area-weighted position along the frustum
      double s, radius;
      do {
        s = unit(rng);
        radius = r0 + (r1 - r0) * s;
      } while (unit(rng) * r_max > radius);
      const double theta = 2.0 * std::numbers::pi * unit(rng);
      const Eigen::Vector3d outward = std::cos(theta) * e1 + std::sin(theta) * e2;
      const Point3 foot = parent.position + s * axis;
      cloud.points.push_back(foot + radius * outward);
      labels.push_back({radius, (-outward).normalized(), static_cast<int>(branch[i])});
    }
  }
  return cloud;
}

PointCloud augment(const PointCloud& cloud, const AugmentParams& params) {
  validate(params);
  if (!cloud.labelled()) throw InvalidInput("augment requires a labelled cloud");
  check_cloud(cloud);

  std::mt19937_64 rng(params.seed);
  std::vector<Point3> centers;
  if (!cloud.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
    for (int c = 0; c < params.occlusion_count; ++c) centers.push_back(cloud.points[pick(rng)]);
  }
  centers.insert(centers.end(), params.occlusion_centers.begin(), params.occlusion_centers.end());

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud out;
  out.labels.emplace();
  if (cloud.colors) out.colors.emplace();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Eigen::Vector3d jitter;
    for (int a = 0; a < 3; ++a) jitter[a] = gauss(rng);
    const Point3 p = cloud.points[i] + params.noise_sigma * jitter;
    const bool dropped = unit(rng) < params.dropout_prob;
    if (dropped) continue;
    bool occluded = false;
    for (const auto& c : centers) {
      if (distance(p, c) < params.occlusion_radius) {
        occluded = true;
        break;
      }
    }
    if (occluded) continue;
    out.points.push_back(p);
    out.labels->push_back((*cloud.labels)[i]);
    if (cloud.colors) out.colors->push_back((*cloud.colors)[i]);
  }
  return out;
}

std::pair<Skeleton, PointCloud> prune_ground_truth(const Skeleton& skeleton,
                                                   const PointCloud& cloud, double min_radius,
                                                   double min_length) {
  if (!(min_radius >= 0.0) || !(min_length >= 0.0)) {
    throw InvalidInput("pruning thresholds must be >= 0");
  }
  if (!cloud.empty() && !cloud.labelled()) {
    throw InvalidInput("pruning a cloud requires branch labels");
  }

  const std::size_t n = skeleton.nodes.size();
  std::unordered_map<NodeId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(skeleton.nodes[i].id, i);
  const auto branch = branch_ids(skeleton);

  std::unordered_map<NodeId, double> max_radius, arc_length;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = skeleton.nodes[i];
    auto& r = max_radius[branch[i]];
    r = std::max(r, node.radius);
    double& len = arc_length[branch[i]];
    if (node.parent) len += distance(node.position, skeleton.nodes[index.at(*node.parent)].position);
  }

  // removed[i]: 0 unknown, 1 kept, 2 removed
  std::vector<std::uint8_t> removed(n, 0);
  std::vector<std::size_t> chain;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cur = i;
    chain.clear();
    while (removed[cur] == 0) {
      chain.push_back(cur);
      const NodeId b = branch[cur];
      if (max_radius[b] < min_radius || arc_length[b] < min_length) {
        removed[cur] = 2;
        break;
      }
      const auto& parent = skeleton.nodes[cur].parent;
      if (!parent) {
        removed[cur] = 1;
        break;
      }
      cur = index.at(*parent);
    }
    const std::uint8_t verdict = removed[cur];
    for (std::size_t c : chain) removed[c] = verdict;
  }

  Skeleton kept;
  std::unordered_set<int> dropped_branches;
  for (std::size_t i = 0; i < n; ++i) {
    if (removed[i] == 1) {
      kept.nodes.push_back(skeleton.nodes[i]);
    } else {
      dropped_branches.insert(static_cast<int>(branch[i]));
    }
  }
  refresh_roots(kept);

  PointCloud out;
  if (cloud.labelled()) out.labels.emplace();
  if (cloud.colors) out.colors.emplace();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.labels && dropped_branches.count((*cloud.labels)[i].branch_id)) continue;
    out.points.push_back(cloud.points[i]);
    if (cloud.labels) out.labels->push_back((*cloud.labels)[i]);
    if (cloud.colors) out.colors->push_back((*cloud.colors)[i]);
  }
  return {std::move(kept), std::move(out)};
}

}  // namespace smart_tree
