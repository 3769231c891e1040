#include "pc2wf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace pc2wf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::size_t> by_descending_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

double mean_over(std::span<const double> thresholds, auto&& ap_at) {
  double sum = 0.0;
  for (double t : thresholds) sum += ap_at(t);
  return sum / static_cast<double>(thresholds.size());
}

}  // namespace

double average_precision(std::span<const PrPoint> points) {
  if (points.empty()) return 0.0;
  double area = points[0].recall * points[0].precision;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].recall - points[i - 1].recall) * (points[i].precision + points[i - 1].precision) / 2.0;
  }
  return area;
}

PrCurve pr_curve_from_ranked(std::span<const std::pair<double, bool>> ranked, std::size_t positives) {
  PrCurve curve;
  if (ranked.empty() || positives == 0) return curve;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (ranked[k].second) ++tp;
    if (k + 1 < ranked.size() && ranked[k + 1].first == ranked[k].first) continue;
    curve.points.push_back({ranked[k].first, static_cast<double>(tp) / static_cast<double>(k + 1),
                            static_cast<double>(tp) / static_cast<double>(positives)});
  }
  curve.ap = average_precision(curve.points);
  return curve;
}

PrCurve vertex_ap(const ScoredWireframe& pred, const Wireframe& gt, double eta) {
  const auto& P = pred.wireframe().vertices();
  const auto& G = gt.vertices();
  std::vector<char> claimed(G.size(), 0);
  std::vector<std::pair<double, bool>> ranked;
  for (auto i : by_descending_score(pred.vertex_scores())) {
    std::size_t best = G.size();
    double best_d = kInf;
    for (std::size_t g = 0; g < G.size(); ++g) {
      double d = (P[i] - G[g]).norm();
      if (!claimed[g] && d < eta && d < best_d) {
        best = g;
        best_d = d;
      }
    }
    if (best < G.size()) claimed[best] = 1;
    ranked.emplace_back(pred.vertex_scores()[i], best < G.size());
  }
  return pr_curve_from_ranked(ranked, G.size());
}

double mean_vertex_ap(const ScoredWireframe& pred, const Wireframe& gt) {
  return mean_over(kVertexThresholds, [&](double t) { return vertex_ap(pred, gt, t).ap; });
}

PrCurve edge_point_ap(const ScoredWireframe& pred, const Wireframe& gt, std::span<const Vec3> cloud, double eta) {
  PrCurve curve;
  if (cloud.size() < 2) throw InvalidInput("edge point AP needs a cloud with at least 2 points");
  const double dbar = mean_nn_spacing(cloud);
  const double reach = std::max(dbar, eta);
  const auto& PV = pred.wireframe().vertices();
  const auto& PE = pred.wireframe().edges();
  const auto& GV = gt.vertices();

  std::size_t n_gt = 0;
  std::vector<double> pscore(cloud.size(), -kInf);  // as a predicted edge point
  std::vector<double> rscore;                        // best score that recalls each gt edge point
  std::vector<char> correct(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double gd = kInf;
    for (const auto& e : gt.edges()) gd = std::min(gd, point_segment_distance(cloud[i], GV[e.a], GV[e.b]));
    const bool gt_point = gd < dbar;
    correct[i] = gt_point || gd < eta;
    double recall_score = -kInf;
    for (std::size_t e = 0; e < PE.size(); ++e) {
      double d = point_segment_distance(cloud[i], PV[PE[e].a], PV[PE[e].b]);
      double s = pred.edge_scores()[e];
      if (d < dbar) pscore[i] = std::max(pscore[i], s);
      if (d < reach) recall_score = std::max(recall_score, s);
    }
    if (gt_point) {
      ++n_gt;
      rscore.push_back(recall_score);
    }
  }
  if (n_gt == 0) return curve;

  std::vector<double> thresholds;
  for (double s : pscore) {
    if (s > -kInf) thresholds.push_back(s);
  }
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  for (double t : thresholds) {
    std::size_t n_pred = 0, n_correct = 0, n_recalled = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (pscore[i] >= t) {
        ++n_pred;
        n_correct += correct[i] ? 1 : 0;
      }
    }
    for (double r : rscore) n_recalled += r >= t ? 1 : 0;
    curve.points.push_back({t, static_cast<double>(n_correct) / static_cast<double>(n_pred),
                            static_cast<double>(n_recalled) / static_cast<double>(n_gt)});
  }
  curve.ap = average_precision(curve.points);
  return curve;
}

double mean_edge_point_ap(const ScoredWireframe& pred, const Wireframe& gt, std::span<const Vec3> cloud) {
  return mean_over(kEdgePointThresholds, [&](double t) { return edge_point_ap(pred, gt, cloud, t).ap; });
}

PrCurve structural_ap(const ScoredWireframe& pred, const Wireframe& gt, double eta) {
  if (gt.edge_count() == 0) throw InvalidInput("structural AP needs a ground truth with edges");
  const auto& PV = pred.wireframe().vertices();
  const auto& PE = pred.wireframe().edges();
  const auto& GV = gt.vertices();
  const auto& GE = gt.edges();
  std::vector<char> claimed(GE.size(), 0);
  std::vector<std::pair<double, bool>> ranked;
  for (auto e : by_descending_score(pred.edge_scores())) {
    std::size_t best = GE.size();
    double best_d = kInf;
    for (std::size_t g = 0; g < GE.size(); ++g) {
      if (claimed[g]) continue;
      const Vec3 &a = PV[PE[e].a], &b = PV[PE[e].b], &c = GV[GE[g].a], &d = GV[GE[g].b];
      double disp = std::min((a - c).norm() + (b - d).norm(), (a - d).norm() + (b - c).norm());
      if (disp < eta && disp < best_d) {
        best = g;
        best_d = disp;
      }
    }
    if (best < GE.size()) claimed[best] = 1;
    ranked.emplace_back(pred.edge_scores()[e], best < GE.size());
  }
  return pr_curve_from_ranked(ranked, GE.size());
}

double mean_structural_ap(const ScoredWireframe& pred, const Wireframe& gt) {
  return mean_over(kStructuralThresholds, [&](double t) { return structural_ap(pred, gt, t).ap; });
}

WedReport wireframe_edit_distance(const Wireframe& pred, const Wireframe& gt, double c_v, double c_e) {
  if (gt.vertex_count() == 0) throw InvalidInput("edit distance needs a non-empty ground truth");
  if (c_v < 0 || c_e < 0) throw InvalidInput("edit costs must be nonnegative");
  WedReport r;
  r.c_v = c_v;
  r.c_e = c_e;
  r.pred_vertices = pred.vertex_count();
  r.gt_vertices = gt.vertex_count();
  const auto& P = pred.vertices();
  const auto& G = gt.vertices();

  // (1) nearest gt vertex for every prediction, (2) translation cost
  std::vector<std::size_t> match(P.size());
  std::vector<char> hit(G.size(), 0);
  for (std::size_t i = 0; i < P.size(); ++i) {
    std::size_t best = 0;
    double best_d = kInf;
    for (std::size_t g = 0; g < G.size(); ++g) {
      double d = (P[i] - G[g]).norm();
      if (d < best_d) {
        best = g;
        best_d = d;
      }
    }
    match[i] = best;
    hit[best] = 1;
    r.wed_v += c_v * best_d;
    if (best_d > 0) ++r.edited_vertices;
  }
  // (3) free insertion of gt vertices nobody reached
  for (char h : hit) {
    if (h) ++r.matched_gt_vertices;
  }
  r.inserted_vertices = G.size() - r.matched_gt_vertices;

  // (4) deletion of mapped edges that are not in gt
  std::set<Edge> mapped;
  for (const auto& e : pred.edges()) {
    std::size_t a = match[e.a], b = match[e.b];
    if (a == b) {
      r.wed_e += c_e * (P[e.a] - P[e.b]).norm();
      ++r.deleted_edges;
      continue;
    }
    mapped.insert(Edge(a, b));
  }
  for (const auto& e : mapped) {
    if (!gt.has_edge(e.a, e.b)) {
      r.wed_e += c_e * (G[e.a] - G[e.b]).norm();
      ++r.deleted_edges;
    }
  }
  // (5) insertion of the gt edges still missing
  for (const auto& e : gt.edges()) {
    if (!mapped.count(e)) {
      r.wed_e += c_e * (G[e.a] - G[e.b]).norm();
      ++r.inserted_edges;
    }
  }
  r.wed = r.wed_v + r.wed_e;
  return r;
}

}  // namespace pc2wf
