#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "pc2wf/core.hpp"

namespace pc2wf {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

// Static 3D kd-tree over a borrowed point array. Query results are ordered by
// (distance, index) so equal distances resolve to the lower index.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  std::size_t size() const { return points_.size(); }

  Neighbor nearest(const Vec3& q) const;
  std::vector<Neighbor> knn(const Vec3& q, std::size_t k) const;
  // Unordered indices within distance r (inclusive).
  std::vector<std::size_t> radius(const Vec3& q, double r) const;

 private:
  struct Node {
    double split = 0.0;
    int axis = -1;  // -1 for a leaf
    std::size_t begin = 0, end = 0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);

  std::span<const Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace pc2wf
