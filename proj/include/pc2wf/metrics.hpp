#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "pc2wf/core.hpp"

namespace pc2wf {

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Points ordered by decreasing threshold (so recall is nondecreasing).
struct PrCurve {
  std::vector<PrPoint> points;
  double ap = 0.0;
};

// Area under the PR points by the trapezoid rule, starting from a recall-0
// anchor that carries the first point's precision.
double average_precision(std::span<const PrPoint> points);

// Builds a curve from predictions already ranked by descending score, each
// flagged true/false positive. Equal scores form a single operating point.
PrCurve pr_curve_from_ranked(std::span<const std::pair<double, bool>> ranked, std::size_t positives);

inline constexpr std::array<double, 3> kVertexThresholds{0.02, 0.03, 0.05};
inline constexpr std::array<double, 3> kEdgePointThresholds{0.01, 0.02, 0.03};
inline constexpr std::array<double, 3> kStructuralThresholds{0.03, 0.05, 0.07};

// Greedy one-to-one matching by descending score to the nearest unclaimed gt
// vertex within eta.
PrCurve vertex_ap(const ScoredWireframe& pred, const Wireframe& gt, double eta);
double mean_vertex_ap(const ScoredWireframe& pred, const Wireframe& gt);

// Point-wise edge AP over the cloud: points within the mean point spacing of
// an edge are edge points. A predicted edge point is correct when it is also
// a gt edge point or lies within eta of a gt edge; a gt edge point is
// recalled when it is a predicted edge point or lies within eta of a
// predicted edge that survives the threshold.
PrCurve edge_point_ap(const ScoredWireframe& pred, const Wireframe& gt, std::span<const Vec3> cloud, double eta);
double mean_edge_point_ap(const ScoredWireframe& pred, const Wireframe& gt, std::span<const Vec3> cloud);

// Structural AP: a predicted edge claims the closest unclaimed gt edge with
// endpoint displacement below eta; repeats of a claimed edge are false positives.
PrCurve structural_ap(const ScoredWireframe& pred, const Wireframe& gt, double eta);
double mean_structural_ap(const ScoredWireframe& pred, const Wireframe& gt);

struct WedReport {
  std::size_t pred_vertices = 0;
  std::size_t gt_vertices = 0;
  std::size_t matched_gt_vertices = 0;  // gt vertices hit by at least one prediction
  std::size_t edited_vertices = 0;      // predicted vertices that had to move
  double wed_v = 0.0;
  std::size_t inserted_vertices = 0;
  std::size_t deleted_edges = 0;
  std::size_t inserted_edges = 0;
  double wed_e = 0.0;
  double wed = 0.0;
  double c_v = 1.0;
  double c_e = 1.0;

  std::size_t edited_edges() const { return deleted_edges + inserted_edges; }
};

// Edit distance from pred to gt via the fixed sequence: nearest-vertex
// matching, translation, free vertex insertion, edge deletion, edge insertion.
WedReport wireframe_edit_distance(const Wireframe& pred, const Wireframe& gt, double c_v = 1.0, double c_e = 1.0);

}  // namespace pc2wf
