#pragma once

#include <span>
#include <string>
#include <vector>

#include "pc2wf/core.hpp"
#include "pc2wf/neigh.hpp"
#include "pc2wf/rng.hpp"

namespace pc2wf {

enum class EdgeProvenance { GtPositive, GtSpurious, GtInaccurate, PredPositive, PredWrongLink, PredNearMiss };

std::string to_string(EdgeProvenance p);

struct EdgeSample {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  bool positive = false;
  EdgeProvenance provenance = EdgeProvenance::GtPositive;
};

struct EdgeSetConfig {
  double eps = 0.02;        // tube radius for spurious gt pairs (usually 2x point spacing)
  double eps1 = 0.03;       // annulus for inaccurate / near-miss endpoints
  double eps2 = 0.10;
  double eps_plus = 0.02;
  double eps_minus = 0.02;
  std::size_t n_probe = 32; // minimum probes along a segment; denser for long segments
  std::size_t inaccurate_per_edge = 4;  // per edge and direction
  std::size_t max_pred_samples = 2000;  // per predicted set

  void validate() const;
};

struct EdgeSets {
  std::vector<EdgeSample> gt_pos, gt_neg, pred_pos, pred_neg;
  bool shortfall = false;  // no negatives could be formed

  // Pairs of gt vertex indices forming spurious negatives, sorted.
  std::vector<Edge> spurious;
};

// E^gt+ and E^gt- for a normalised cloud and its gt wireframe.
EdgeSets build_gt_edge_sets(const Wireframe& gt, const CloudIndex& index, const EdgeSetConfig& cfg,
                            Rng& rng);
// Replaces E^pred+ / E^pred- using the current vertex predictions.
void build_pred_edge_sets(EdgeSets& sets, const Wireframe& gt, std::span<const Vec3> predicted,
                          const EdgeSetConfig& cfg, Rng& rng);

EdgeSets build_edge_sets(const Wireframe& gt, std::span<const Vec3> predicted, const CloudIndex& index,
                         const EdgeSetConfig& cfg, Rng& rng);

}  // namespace pc2wf
