#include "pc2wf/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "pc2wf/kdtree.hpp"

namespace pc2wf {

PointCloud::PointCloud(std::vector<Vec3> points, std::string source)
    : points_(std::move(points)), source_(std::move(source)) {
  if (points_.empty()) throw InvalidInput("point cloud must contain at least one point");
}

PointCloud::PointCloud(std::vector<Vec3> points, Matrix features, std::string source)
    : PointCloud(std::move(points), std::move(source)) {
  if (static_cast<std::size_t>(features.rows()) != points_.size()) {
    std::ostringstream msg;
    msg << "feature matrix has " << features.rows() << " rows for " << points_.size()
        << " points";
    throw InvalidInput(msg.str());
  }
  features_ = std::move(features);
}

PointCloud PointCloud::with_features(Matrix features) const {
  return PointCloud(points_, std::move(features), source_);
}

Wireframe::Wireframe(std::vector<Vec3> vertices, std::vector<Edge> edges)
    : vertices_(std::move(vertices)), edges_(std::move(edges)) {
  std::set<Edge> seen;
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const Edge& e = edges_[k];
    // Edge's constructor already canonicalises, but aggregate-initialised edges may not be.
    Edge canon(e.a, e.b);
    if (canon.a == canon.b) {
      throw InvalidInput("edge " + std::to_string(k) + " is a self-loop on vertex " +
                         std::to_string(e.a));
    }
    if (canon.b >= vertices_.size()) {
      throw InvalidInput("edge " + std::to_string(k) + " references vertex " +
                         std::to_string(canon.b) + " but only " +
                         std::to_string(vertices_.size()) + " vertices exist");
    }
    if (!seen.insert(canon).second) {
      throw InvalidInput("edge " + std::to_string(k) + " duplicates (" + std::to_string(canon.a) +
                         ", " + std::to_string(canon.b) + ")");
    }
    edges_[k] = canon;
  }
}

bool Wireframe::has_edge(std::size_t i, std::size_t j) const {
  Edge q(i, j);
  return std::find(edges_.begin(), edges_.end(), q) != edges_.end();
}

double Wireframe::edge_length(std::size_t e) const {
  return (vertices_[edges_[e].a] - vertices_[edges_[e].b]).norm();
}

ScoredWireframe::ScoredWireframe(Wireframe wireframe, std::vector<double> vertex_scores,
                                 std::vector<double> edge_scores)
    : wireframe_(std::move(wireframe)),
      vertex_scores_(std::move(vertex_scores)),
      edge_scores_(std::move(edge_scores)) {
  if (vertex_scores_.size() != wireframe_.vertex_count() ||
      edge_scores_.size() != wireframe_.edge_count()) {
    throw InvalidInput("score arrays must have one entry per vertex and per edge");
  }
  auto valid = [](double s) { return s >= 0.0 && s <= 1.0; };
  if (!std::all_of(vertex_scores_.begin(), vertex_scores_.end(), valid) ||
      !std::all_of(edge_scores_.begin(), edge_scores_.end(), valid)) {
    throw InvalidInput("scores must lie in [0, 1]");
  }
}

ScoredWireframe ScoredWireframe::certain(Wireframe wireframe) {
  std::vector<double> vs(wireframe.vertex_count(), 1.0);
  std::vector<double> es(wireframe.edge_count(), 1.0);
  return ScoredWireframe(std::move(wireframe), std::move(vs), std::move(es));
}

bool Mesh::is_watertight() const {
  std::map<Edge, int> uses;
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k) ++uses[Edge(t[k], t[(k + 1) % 3])];
  }
  return !uses.empty() &&
         std::all_of(uses.begin(), uses.end(), [](const auto& kv) { return kv.second == 2; });
}

std::pair<PointCloud, NormalizeTransform> normalize(const PointCloud& cloud) {
  if (cloud.size() < 2) throw InvalidInput("normalisation needs at least two points");
  Vec3 lo = cloud[0], hi = cloud[0];
  for (const auto& p : cloud.points()) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) throw InvalidInput("degenerate point cloud: all points coincide");

  NormalizeTransform t;
  t.offset = lo;
  t.scale = 1.0 / extent;
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points()) out.push_back(t.apply(p));
  if (cloud.features()) {
    return {PointCloud(std::move(out), *cloud.features(), cloud.source()), t};
  }
  return {PointCloud(std::move(out), cloud.source()), t};
}

Wireframe transform_wireframe(const Wireframe& wf, const NormalizeTransform& t) {
  std::vector<Vec3> vs;
  vs.reserve(wf.vertex_count());
  for (const auto& v : wf.vertices()) vs.push_back(t.apply(v));
  return Wireframe(std::move(vs), wf.edges());
}

Wireframe invert_wireframe(const Wireframe& wf, const NormalizeTransform& t) {
  std::vector<Vec3> vs;
  vs.reserve(wf.vertex_count());
  for (const auto& v : wf.vertices()) vs.push_back(t.invert(v));
  return Wireframe(std::move(vs), wf.edges());
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  // Canonical endpoint order makes the result bitwise symmetric in (a, b).
  if (std::lexicographical_compare(b.data(), b.data() + 3, a.data(), a.data() + 3)) {
    return point_segment_distance(p, b, a);
  }
  Vec3 ab = b - a;
  double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double mean_nn_spacing(std::span<const Vec3> points) {
  if (points.size() < 2) return 0.0;
  KdTree tree(points);
  double sum = 0.0;
  for (const auto& p : points) sum += tree.knn(p, 2)[1].distance;
  return sum / static_cast<double>(points.size());
}

}  // namespace pc2wf
