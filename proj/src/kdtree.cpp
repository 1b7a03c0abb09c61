#include "smart_tree/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace smart_tree {

namespace {

// Box bounds are rounded; shrink them slightly so pruning never discards a
// point whose rounded distance ties with the current bound.
constexpr double kSlack = 1.0 - 1e-12;

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

}  // namespace

KdTree::KdTree(std::span<const Point3> points, std::span<const double> weights,
               std::size_t leaf_size)
    : points_(points), weights_(weights), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  if (!weights_.empty() && weights_.size() != points_.size()) {
    throw InvalidInput("kd-tree weights must match the point count");
  }
  if (points_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidInput("too many points for the spatial index");
  }
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.emplace_back();
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    node.lo = node.lo.cwiseMin(points_[order_[i]]);
    node.hi = node.hi.cwiseMax(points_[order_[i]]);
    if (!weights_.empty()) node.max_weight = std::max(node.max_weight, weights_[order_[i]]);
  }

  if (end - begin > leaf_size_) {
    int axis;
    (node.hi - node.lo).maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double pa = points_[a][axis], pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    node.left = build(begin, mid);
    node.right = build(mid, end);
  }
  nodes_[id] = node;
  return id;
}

double KdTree::box_distance(const Node& node, const Point3& q) const {
  const Eigen::Vector3d gap =
      (node.lo - q).cwiseMax(q - node.hi).cwiseMax(Eigen::Vector3d::Zero());
  return gap.norm();
}

void KdTree::radius_search(const Point3& query, double radius, std::vector<Neighbor>& out) const {
  out.clear();
  if (nodes_.empty() || !(radius > 0.0)) return;
  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (box_distance(node, query) * kSlack >= radius) continue;
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        const double d = distance(query, points_[idx]);
        if (d < radius) out.push_back({idx, d});
      }
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Neighbor& a, const Neighbor& b) { return a.index < b.index; });
}

std::vector<Neighbor> KdTree::knn(const Point3& query, std::size_t k) const {
  std::vector<Neighbor> heap;  // max-heap under `closer`
  if (nodes_.empty() || k == 0) return heap;
  heap.reserve(k + 1);

  // best-first over nodes
  using Entry = std::pair<double, std::int32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
  frontier.emplace(box_distance(nodes_[0], query), 0);
  while (!frontier.empty()) {
    const auto [bound, id] = frontier.top();
    frontier.pop();
    if (heap.size() == k && bound * kSlack > heap.front().distance) break;
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const Neighbor cand{order_[i], distance(query, points_[order_[i]])};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end(), closer);
        } else if (closer(cand, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), closer);
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end(), closer);
        }
      }
    } else {
      frontier.emplace(box_distance(nodes_[node.left], query), node.left);
      frontier.emplace(box_distance(nodes_[node.right], query), node.right);
    }
  }
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

Neighbor KdTree::nearest(const Point3& query) const {
  if (nodes_.empty()) throw InvalidInput("nearest query on an empty point set");
  return knn(query, 1).front();
}

Neighbor KdTree::nearest_scaled(const Point3& query) const {
  if (nodes_.empty()) throw InvalidInput("nearest query on an empty point set");
  if (weights_.empty()) throw InvalidInput("nearest_scaled requires per-point weights");

  // `distance` of the result carries the Euclidean distance; ranking uses the ratio.
  Neighbor best{0, 0.0};
  double best_ratio = std::numeric_limits<double>::infinity();
  using Entry = std::pair<double, std::int32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
  auto lower_bound = [&](const Node& node) { return box_distance(node, query) / node.max_weight; };
  frontier.emplace(lower_bound(nodes_[0]), 0);
  while (!frontier.empty()) {
    const auto [bound, id] = frontier.top();
    frontier.pop();
    if (bound * kSlack > best_ratio) break;
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        const double d = distance(query, points_[idx]);
        const double ratio = d / weights_[idx];
        if (ratio < best_ratio || (ratio == best_ratio && idx < best.index)) {
          best_ratio = ratio;
          best = {idx, d};
        }
      }
    } else {
      frontier.emplace(lower_bound(nodes_[node.left]), node.left);
      frontier.emplace(lower_bound(nodes_[node.right]), node.right);
    }
  }
  return best;
}

}  // namespace smart_tree
