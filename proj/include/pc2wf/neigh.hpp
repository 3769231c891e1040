#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pc2wf/core.hpp"
#include "pc2wf/kdtree.hpp"
#include "pc2wf/rng.hpp"

namespace pc2wf {

// Symmetrised k-nearest-neighbour graph with Euclidean edge weights.
struct KnnGraph {
  std::vector<std::vector<Neighbor>> adjacency;  // sorted by neighbour index
  std::size_t k = 0;

  std::size_t size() const { return adjacency.size(); }
};

// Throws InvalidInput unless N > k.
KnnGraph build_knn_graph(std::span<const Vec3> points, std::size_t k);
KnnGraph build_knn_graph(const std::vector<std::vector<Neighbor>>& nearest, std::size_t k);

// Shortest-path distances from `source` (infinity where unreachable).
std::vector<double> dijkstra(const KnnGraph& graph, std::size_t source);

enum class PatchLabel { Unlabeled, Vertex, NoVertex };

struct Patch {
  std::size_t seed = 0;
  std::vector<std::size_t> members;  // seed first, then by geodesic distance
  PatchLabel label = PatchLabel::Unlabeled;
  std::optional<Vec3> gt_vertex;
};

// Seed plus the M-1 geodesically closest points; ties broken by point index.
// Throws InvalidInput naming the component size when it holds fewer than M points.
Patch geodesic_patch(const KnnGraph& graph, std::size_t seed, std::size_t m);

// Greedy max-min sampling starting from `start`; ties go to the lower index.
std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points, std::size_t count,
                                                 std::size_t start = 0);

// ceil(N * coverage / M): on average every point falls in `coverage` patches.
std::size_t inference_seed_count(std::size_t n, std::size_t m, double coverage = 2.0);

// A cloud together with the spatial structures every stage needs: kd-tree,
// per-point nearest neighbours, the geodesic kNN graph and the mean spacing.
class CloudIndex {
 public:
  explicit CloudIndex(PointCloud cloud, std::size_t graph_k = 8, std::size_t neighbor_k = 16);

  const PointCloud& cloud() const { return *cloud_; }
  std::span<const Vec3> points() const { return cloud_->points(); }
  std::size_t size() const { return cloud_->size(); }
  const KdTree& tree() const { return *tree_; }
  const KnnGraph& graph() const { return graph_; }
  // Up to neighbor_k nearest other points per point, ordered by distance.
  const std::vector<std::vector<Neighbor>>& neighbors() const { return neighbors_; }
  double spacing() const { return spacing_; }

 private:
  std::shared_ptr<const PointCloud> cloud_;
  std::shared_ptr<const KdTree> tree_;
  std::vector<std::vector<Neighbor>> neighbors_;
  KnnGraph graph_;
  double spacing_ = 0.0;
};

struct PatchSamplingConfig {
  std::size_t m = 50;
  std::size_t n_pos = 32;
  std::size_t n_neg = 32;
  double neg_edge_fraction = 0.5;
  double r_pos = 0.02;            // a patch contains a corner iff a member lies this close to it
  double pos_seed_radius = 0.02;  // positive seeds are drawn this close to a gt vertex
  double flat_margin = 0.05;      // flat negatives are seeded this far from every gt edge
  std::size_t max_attempts = 40;  // per requested patch
};

struct PatchSample {
  std::vector<Patch> patches;  // positives first, then near-edge, then flat negatives
  std::size_t positives = 0;
  std::size_t edge_negatives = 0;
  std::size_t flat_negatives = 0;
  bool shortfall = false;  // fewer patches than requested could be found
};

PatchSample sample_training_patches(const CloudIndex& index, const Wireframe& gt,
                                    const PatchSamplingConfig& cfg, Rng& rng);

// Distance from p to the nearest vertex of wf (infinity for no vertices).
double distance_to_vertices(const Vec3& p, const Wireframe& wf);
double distance_to_edges(const Vec3& p, const Wireframe& wf);

}  // namespace pc2wf
