#include "pc2wf/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace pc2wf {

namespace {

constexpr std::size_t kLeafSize = 12;

bool closer(const Neighbor& x, const Neighbor& y) {
  return x.distance < y.distance || (x.distance == y.distance && x.index < y.index);
}

}  // namespace

KdTree::KdTree(std::span<const Vec3> points) : points_(points), order_(points.size()) {
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!order_.empty()) {
    nodes_.reserve(2 * (order_.size() / kLeafSize + 1));
    build(0, order_.size());
  }
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  std::size_t id = nodes_.size();
  nodes_.push_back(Node{});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0.0) return id;  // all identical: keep as leaf

  std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t x, std::size_t y) {
                     return points_[x][axis] < points_[y][axis];
                   });
  double split = points_[order_[mid]][axis];
  std::size_t left = build(begin, mid);
  std::size_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

Neighbor KdTree::nearest(const Vec3& q) const {
  auto r = knn(q, 1);
  if (r.empty()) throw InvalidInput("nearest neighbour query on an empty tree");
  return r.front();
}

std::vector<Neighbor> KdTree::knn(const Vec3& q, std::size_t k) const {
  k = std::min(k, points_.size());
  std::vector<Neighbor> heap;  // max-heap under `closer`
  if (k == 0) return heap;
  heap.reserve(k + 1);

  auto worst = [&]() {
    return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().distance;
  };

  // Iterative traversal with explicit stack of (node, lower bound on distance).
  std::vector<std::pair<std::size_t, double>> stack;
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    auto [id, bound] = stack.back();
    stack.pop_back();
    if (bound > worst()) continue;
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        std::size_t idx = order_[i];
        Neighbor cand{idx, (points_[idx] - q).norm()};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end(), closer);
        } else if (closer(cand, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), closer);
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end(), closer);
        }
      }
      continue;
    }
    double diff = q[n.axis] - n.split;
    std::size_t near = diff < 0 ? n.left : n.right;
    std::size_t far = diff < 0 ? n.right : n.left;
    // Far side pushed first so the near side is visited first.
    stack.emplace_back(far, std::max(bound, std::abs(diff)));
    stack.emplace_back(near, bound);
  }
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

std::vector<std::size_t> KdTree::radius(const Vec3& q, double r) const {
  std::vector<std::size_t> out;
  if (nodes_.empty()) return out;
  std::vector<std::size_t> stack{0};
  double r2 = r * r;
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        if ((points_[order_[i]] - q).squaredNorm() <= r2) out.push_back(order_[i]);
      }
      continue;
    }
    double diff = q[n.axis] - n.split;
    if (diff - r <= 0) stack.push_back(n.left);
    if (diff + r >= 0) stack.push_back(n.right);
  }
  return out;
}

}  // namespace pc2wf
