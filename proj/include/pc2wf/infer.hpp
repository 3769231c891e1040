#pragma once

#include <span>
#include <vector>

#include "pc2wf/backbone.hpp"
#include "pc2wf/model.hpp"
#include "pc2wf/neigh.hpp"

namespace pc2wf {

struct ScoredVertex {
  Vec3 position = Vec3::Zero();
  double score = 0.0;
};

struct InferenceConfig {
  double vertex_thresh = 0.5;
  double edge_thresh = 0.5;
  double vertex_nms_radius = 0.03;
  double edge_nms_eta = 0.05;
  double tau_spacing_factor = 2.0;  // tau_surf = factor * mean point spacing
  std::size_t n_probe = 32;
  double collinear_tol = 0.05;      // radians
  double patch_coverage = 2.0;      // mean number of inference patches covering a point
  std::size_t max_vertices = 256;   // highest-scoring vertices kept for edge search; 0 = no limit
  bool vertex_nms = true;
  bool edge_nms = true;
  bool straighten = true;
  int threads = 1;

  void validate() const;
};

// FPS seeds -> geodesic patches -> detector; patches at or above the
// threshold are localised. Output order follows the seeds.
std::vector<ScoredVertex> predict_vertices(const CloudIndex& index, const Matrix& features,
                                           const HeadBundle& bundle, double prob_thresh,
                                           double patch_coverage = 2.0, int threads = 1);

// Greedy by descending score (ties: input order); drops anything within
// `radius` of a kept vertex.
std::vector<ScoredVertex> vertex_nms(std::span<const ScoredVertex> vertices, double radius);

struct EdgeCandidateStats {
  std::size_t candidates = 0;
  std::size_t pruned = 0;    // failed the surface test
  std::size_t verified = 0;  // edge head evaluations
};

// Every vertex pair whose mean probe distance is <= tau_surf is verified;
// edges scoring at least prob_thresh are kept.
ScoredWireframe predict_edges(std::span<const ScoredVertex> vertices, const CloudIndex& index,
                              const Matrix& features, const HeadBundle& bundle, double tau_surf,
                              std::size_t n_probe, double prob_thresh, int threads = 1,
                              EdgeCandidateStats* stats = nullptr);

// Endpoint displacement under the better of the two endpoint pairings.
double edge_displacement(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

ScoredWireframe edge_nms(const ScoredWireframe& wf, double eta);

// Removes degree-2 vertices on straight chains (angle within collinear_tol of
// pi) or lying close to an existing edge between their two neighbours.
ScoredWireframe straighten(const ScoredWireframe& wf, double collinear_tol);

struct Extraction {
  ScoredWireframe normalized;  // in the unit-cube frame of the normalised cloud
  ScoredWireframe world;       // in the input frame
  NormalizeTransform transform;
  std::size_t raw_vertices = 0;
  EdgeCandidateStats edges;
};

Extraction extract_wireframe(const PointCloud& cloud, const HeadBundle& bundle, const InferenceConfig& cfg);

// Same, for a cloud that is already normalised and indexed (features computed
// by the caller).
ScoredWireframe extract_from_index(const CloudIndex& index, const Matrix& features, const HeadBundle& bundle,
                                   const InferenceConfig& cfg, Extraction* details = nullptr);

}  // namespace pc2wf
