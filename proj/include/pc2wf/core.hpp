#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace pc2wf {

using Vec3 = Eigen::Vector3d;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input that cannot be processed (degenerate cloud, bad parameters, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent file contents.
class ParseError : public Error {
 public:
  using Error::Error;
};

class PointCloud {
 public:
  explicit PointCloud(std::vector<Vec3> points, std::string source = {});
  PointCloud(std::vector<Vec3> points, Matrix features, std::string source = {});

  std::size_t size() const { return points_.size(); }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<Vec3>& points() const { return points_; }
  const std::optional<Matrix>& features() const { return features_; }
  const std::string& source() const { return source_; }

  PointCloud with_features(Matrix features) const;

 private:
  std::vector<Vec3> points_;
  std::optional<Matrix> features_;
  std::string source_;
};

// Undirected edge stored as (min, max).
struct Edge {
  std::size_t a = 0;
  std::size_t b = 0;

  Edge() = default;
  Edge(std::size_t i, std::size_t j) : a(std::min(i, j)), b(std::max(i, j)) {}

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

class Wireframe {
 public:
  Wireframe() = default;
  // Throws InvalidInput on self-loops, duplicate edges, or out-of-range indices.
  Wireframe(std::vector<Vec3> vertices, std::vector<Edge> edges);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  bool has_edge(std::size_t i, std::size_t j) const;
  double edge_length(std::size_t e) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Edge> edges_;
};

class ScoredWireframe {
 public:
  ScoredWireframe() = default;
  ScoredWireframe(Wireframe wireframe, std::vector<double> vertex_scores,
                  std::vector<double> edge_scores);
  // All scores set to 1.
  static ScoredWireframe certain(Wireframe wireframe);

  const Wireframe& wireframe() const { return wireframe_; }
  const std::vector<double>& vertex_scores() const { return vertex_scores_; }
  const std::vector<double>& edge_scores() const { return edge_scores_; }

 private:
  Wireframe wireframe_;
  std::vector<double> vertex_scores_;
  std::vector<double> edge_scores_;
};

using Triangle = std::array<std::size_t, 3>;

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  Wireframe gt_wireframe;

  // Every undirected triangle edge is shared by exactly two triangles.
  bool is_watertight() const;
};

// Maps input coordinates into the unit cube: x' = (x - offset) * scale.
struct NormalizeTransform {
  Vec3 offset = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p - offset) * scale; }
  Vec3 invert(const Vec3& p) const { return p / scale + offset; }
  bool is_identity() const { return scale == 1.0 && offset.isZero(0.0); }
};

std::pair<PointCloud, NormalizeTransform> normalize(const PointCloud& cloud);
Wireframe transform_wireframe(const Wireframe& wf, const NormalizeTransform& t);
Wireframe invert_wireframe(const Wireframe& wf, const NormalizeTransform& t);

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

// Mean distance from each point to its nearest other point.
double mean_nn_spacing(std::span<const Vec3> points);

}  // namespace pc2wf
