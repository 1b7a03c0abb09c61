#include "smart_tree/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace smart_tree {

namespace {

using VoxelKey = std::array<std::int64_t, 3>;

VoxelKey voxel_key(const Point3& p, double resolution) {
  return {static_cast<std::int64_t>(std::floor(p.x() / resolution)),
          static_cast<std::int64_t>(std::floor(p.y() / resolution)),
          static_cast<std::int64_t>(std::floor(p.z() / resolution))};
}

// z-major ordering
bool key_less(const VoxelKey& a, const VoxelKey& b) {
  if (a[2] != b[2]) return a[2] < b[2];
  if (a[1] != b[1]) return a[1] < b[1];
  return a[0] < b[0];
}

// A centroid of points inside a voxel lies inside it mathematically, but the
// rounded mean can land on the far face. Step it back inside so that
// downsampling stays idempotent.
double clamp_into_voxel(double value, std::int64_t key, double resolution) {
  for (int guard = 0; guard < 64; ++guard) {
    const auto k = static_cast<std::int64_t>(std::floor(value / resolution));
    if (k == key) return value;
    value = std::nextafter(value, k > key ? -INFINITY : INFINITY);
  }
  return value;
}

bool lex_less(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
}

// Total order on point records; equal records are interchangeable.
bool record_less(const PointCloud& cloud, std::size_t a, std::size_t b) {
  const auto& pa = cloud.points[a];
  const auto& pb = cloud.points[b];
  if (pa != pb) return lex_less(pa, pb);
  if (cloud.labels) {
    const auto& la = (*cloud.labels)[a];
    const auto& lb = (*cloud.labels)[b];
    if (la.radius != lb.radius) return la.radius < lb.radius;
    if (la.direction != lb.direction) return lex_less(la.direction, lb.direction);
    if (la.branch_id != lb.branch_id) return la.branch_id < lb.branch_id;
  }
  if (cloud.colors) {
    const auto& ca = (*cloud.colors)[a];
    const auto& cb = (*cloud.colors)[b];
    return std::tie(ca.r, ca.g, ca.b) < std::tie(cb.r, cb.g, cb.b);
  }
  return false;
}

}  // namespace

void check_cloud(const PointCloud& cloud) {
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (!cloud.points[i].allFinite()) {
      throw InvalidInput("point " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
  if (cloud.labels && cloud.labels->size() != cloud.points.size()) {
    throw InvalidInput("label count does not match point count");
  }
  if (cloud.colors && cloud.colors->size() != cloud.points.size()) {
    throw InvalidInput("color count does not match point count");
  }
}

std::vector<std::vector<std::size_t>> voxel_groups(const std::vector<Point3>& points,
                                                   double resolution) {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw InvalidInput("voxel resolution must be positive");
  }
  std::vector<std::pair<VoxelKey, std::size_t>> keyed;
  keyed.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw InvalidInput("point " + std::to_string(i) + " has a non-finite coordinate");
    }
    keyed.emplace_back(voxel_key(points[i], resolution), i);
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return key_less(a.first, b.first);
    return a.second < b.second;
  });

  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    if (i == 0 || keyed[i].first != keyed[i - 1].first) groups.emplace_back();
    groups.back().push_back(keyed[i].second);
  }
  return groups;
}

PointCloud voxel_downsample(const PointCloud& cloud, double resolution) {
  check_cloud(cloud);
  const auto groups = voxel_groups(cloud.points, resolution);

  PointCloud out;
  out.points.reserve(groups.size());
  if (cloud.labels) out.labels.emplace().reserve(groups.size());
  if (cloud.colors) out.colors.emplace().reserve(groups.size());

  for (auto group : groups) {
    // canonical member order so rounded sums do not depend on input order
    std::sort(group.begin(), group.end(), [&](std::size_t a, std::size_t b) {
      return record_less(cloud, a, b);
    });
    if (group.size() == 1) {
      const std::size_t i = group.front();
      out.points.push_back(cloud.points[i]);
      if (cloud.labels) out.labels->push_back((*cloud.labels)[i]);
      if (cloud.colors) out.colors->push_back((*cloud.colors)[i]);
      continue;
    }

    const double n = static_cast<double>(group.size());
    Point3 sum = Point3::Zero();
    for (std::size_t i : group) sum += cloud.points[i];
    Point3 centroid = sum / n;
    const VoxelKey key = voxel_key(cloud.points[group.front()], resolution);
    for (int axis = 0; axis < 3; ++axis) {
      centroid[axis] = clamp_into_voxel(centroid[axis], key[axis], resolution);
    }
    out.points.push_back(centroid);

    if (cloud.labels) {
      const auto& labels = *cloud.labels;
      GroundTruthLabel merged;
      double radius_sum = 0.0;
      Eigen::Vector3d dir_sum = Eigen::Vector3d::Zero();
      std::map<int, std::size_t> votes;
      for (std::size_t i : group) {
        radius_sum += labels[i].radius;
        dir_sum += labels[i].direction;
        ++votes[labels[i].branch_id];
      }
      merged.radius = radius_sum / n;
      const double norm = dir_sum.norm();
      merged.direction = norm > 1e-12 ? Eigen::Vector3d(dir_sum / norm)
                                      : labels[group.front()].direction;
      // std::map iterates ascending, so ties go to the smallest branch id.
      std::size_t best = 0;
      for (const auto& [id, count] : votes) {
        if (count > best) {
          best = count;
          merged.branch_id = id;
        }
      }
      out.labels->push_back(merged);
    }

    if (cloud.colors) {
      std::array<double, 3> acc{0, 0, 0};
      for (std::size_t i : group) {
        const Color& c = (*cloud.colors)[i];
        acc[0] += c.r;
        acc[1] += c.g;
        acc[2] += c.b;
      }
      out.colors->push_back({static_cast<std::uint8_t>(std::lround(acc[0] / n)),
                             static_cast<std::uint8_t>(std::lround(acc[1] / n)),
                             static_cast<std::uint8_t>(std::lround(acc[2] / n))});
    }
  }
  return out;
}

std::vector<std::string> skeleton_validate(const Skeleton& skeleton) {
  std::vector<std::string> violations;
  std::unordered_map<NodeId, std::size_t> index;
  for (std::size_t i = 0; i < skeleton.nodes.size(); ++i) {
    const auto& node = skeleton.nodes[i];
    if (!index.emplace(node.id, i).second) {
      violations.push_back("node " + std::to_string(node.id) + ": duplicate id");
    }
  }

  for (const auto& node : skeleton.nodes) {
    const std::string tag = "node " + std::to_string(node.id);
    if (!(node.radius > 0.0) || !std::isfinite(node.radius)) {
      violations.push_back(tag + ": radius must be positive and finite");
    }
    if (!node.position.allFinite()) {
      violations.push_back(tag + ": non-finite position");
    }
    if (node.parent) {
      if (*node.parent == node.id) {
        violations.push_back(tag + ": cycle (node is its own parent)");
      } else if (!index.count(*node.parent)) {
        violations.push_back(tag + ": parent " + std::to_string(*node.parent) +
                             " does not exist");
      }
    }
  }

  // Longer cycles: walk parent links with a three-colour marking.
  std::vector<std::uint8_t> state(skeleton.nodes.size(), 0);  // 0 new, 1 on stack, 2 done
  for (std::size_t start = 0; start < skeleton.nodes.size(); ++start) {
    if (state[start]) continue;
    std::vector<std::size_t> chain;
    std::size_t cur = start;
    bool cyclic = false;
    while (true) {
      if (state[cur] == 2) break;
      if (state[cur] == 1) {
        cyclic = true;
        break;
      }
      state[cur] = 1;
      chain.push_back(cur);
      const auto& parent = skeleton.nodes[cur].parent;
      if (!parent || *parent == skeleton.nodes[cur].id) break;
      auto it = index.find(*parent);
      if (it == index.end()) break;
      cur = it->second;
    }
    if (cyclic && skeleton.nodes[cur].parent != skeleton.nodes[cur].id) {
      violations.push_back("node " + std::to_string(skeleton.nodes[cur].id) +
                           ": cycle through parent links");
    }
    for (std::size_t i : chain) state[i] = 2;
  }

  std::unordered_set<NodeId> listed;
  for (NodeId root : skeleton.roots) {
    listed.insert(root);
    auto it = index.find(root);
    if (it == index.end()) {
      violations.push_back("node " + std::to_string(root) + ": listed as root but missing");
    } else if (skeleton.nodes[it->second].parent) {
      violations.push_back("node " + std::to_string(root) + ": listed as root but has a parent");
    }
  }
  for (const auto& node : skeleton.nodes) {
    if (!node.parent && !listed.count(node.id)) {
      violations.push_back("node " + std::to_string(node.id) + ": has no parent but is not a root");
    }
  }
  return violations;
}

void refresh_roots(Skeleton& skeleton) {
  skeleton.roots.clear();
  for (const auto& node : skeleton.nodes) {
    if (!node.parent) skeleton.roots.push_back(node.id);
  }
  std::sort(skeleton.roots.begin(), skeleton.roots.end());
}

std::vector<NodeId> branch_ids(const Skeleton& skeleton) {
  const std::size_t n = skeleton.nodes.size();
  std::unordered_map<NodeId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(skeleton.nodes[i].id, i);

  // continuation child per node
  std::vector<std::optional<std::size_t>> continuation(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = skeleton.nodes[i];
    if (!node.parent) continue;
    const std::size_t p = index.at(*node.parent);
    auto& best = continuation[p];
    if (!best) {
      best = i;
      continue;
    }
    const auto& cur = skeleton.nodes[*best];
    if (node.radius > cur.radius || (node.radius == cur.radius && node.id < cur.id)) best = i;
  }

  std::vector<NodeId> branch(n);
  std::vector<bool> done(n, false);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i) {
    // resolve by walking up to the nearest branch start or resolved node
    std::size_t cur = i;
    stack.clear();
    while (!done[cur]) {
      stack.push_back(cur);
      const auto& node = skeleton.nodes[cur];
      if (!node.parent) break;
      const std::size_t p = index.at(*node.parent);
      if (continuation[p] != cur) break;
      cur = p;
    }
    NodeId id = done[cur] ? branch[cur] : skeleton.nodes[cur].id;
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
      branch[*it] = id;
      done[*it] = true;
    }
  }
  return branch;
}

}  // namespace smart_tree
