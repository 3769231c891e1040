#include "pc2wf/edge_sets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pc2wf/model.hpp"

namespace pc2wf {

std::string to_string(EdgeProvenance p) {
  switch (p) {
    case EdgeProvenance::GtPositive: return "gt+";
    case EdgeProvenance::GtSpurious: return "gt-spurious";
    case EdgeProvenance::GtInaccurate: return "gt-inaccurate";
    case EdgeProvenance::PredPositive: return "pred+";
    case EdgeProvenance::PredWrongLink: return "pred-wrong";
    case EdgeProvenance::PredNearMiss: return "pred-miss";
  }
  return "?";
}

void EdgeSetConfig::validate() const {
  if (!(eps > 0) || !(eps1 > 0) || !(eps2 > 0) || !(eps_plus > 0) || !(eps_minus > 0)) {
    throw InvalidInput("edge-set thresholds must be positive");
  }
  if (eps1 > eps2) throw InvalidInput("eps1 must not exceed eps2");
  if (n_probe < 2) throw InvalidInput("surface test needs at least 2 probes");
}

namespace {

template <typename T>
void subsample(std::vector<T>& v, std::size_t cap, Rng& rng) {
  if (v.size() <= cap) return;
  std::shuffle(v.begin(), v.end(), rng);
  v.resize(cap);
}

struct Nearest {
  std::size_t vertex = 0;
  double distance = std::numeric_limits<double>::infinity();
};

Nearest nearest_vertex(const Vec3& p, const Wireframe& gt) {
  Nearest best;
  for (std::size_t k = 0; k < gt.vertex_count(); ++k) {
    double d = (p - gt.vertices()[k]).norm();
    if (d < best.distance) best = {k, d};
  }
  return best;
}

}  // namespace

EdgeSets build_gt_edge_sets(const Wireframe& gt, const CloudIndex& index, const EdgeSetConfig& cfg,
                            Rng& rng) {
  cfg.validate();
  if (gt.vertex_count() == 0) throw InvalidInput("edge sets need a non-empty wireframe");
  EdgeSets sets;
  const auto& V = gt.vertices();
  for (const auto& e : gt.edges()) sets.gt_pos.push_back({V[e.a], V[e.b], true, EdgeProvenance::GtPositive});

  // Spurious: non-adjacent vertex pairs whose segment stays within eps of the cloud.
  for (std::size_t i = 0; i < V.size(); ++i) {
    for (std::size_t j = i + 1; j < V.size(); ++j) {
      if (gt.has_edge(i, j)) continue;
      double len = (V[i] - V[j]).norm();
      if (len == 0.0) continue;
      auto probes = std::max(cfg.n_probe, static_cast<std::size_t>(std::ceil(2.0 * len / cfg.eps)) + 1);
      if (segment_on_surface(V[i], V[j], index.tree(), cfg.eps, probes).on_surface) {
        sets.gt_neg.push_back({V[i], V[j], false, EdgeProvenance::GtSpurious});
        sets.spurious.emplace_back(i, j);
      }
    }
  }

  // Inaccurate: keep v_i, replace v_j by a cloud point in the [eps1, eps2] annulus around it.
  const auto pts = index.points();
  for (const auto& e : gt.edges()) {
    for (int dir = 0; dir < 2; ++dir) {
      std::size_t vi = dir == 0 ? e.a : e.b;
      std::size_t vj = dir == 0 ? e.b : e.a;
      auto cand = index.tree().radius(V[vj], cfg.eps2);
      std::sort(cand.begin(), cand.end());
      std::vector<std::size_t> ok;
      for (auto k : cand) {
        double d = (pts[k] - V[vj]).norm();
        if (d < cfg.eps1 || d > cfg.eps2) continue;
        if ((pts[k] - V[vi]).norm() < cfg.eps_plus) continue;
        // A point that sits on another true neighbour of v_i would make a true edge.
        bool true_edge = false;
        for (std::size_t m = 0; m < V.size() && !true_edge; ++m) {
          true_edge = m != vi && gt.has_edge(vi, m) && (pts[k] - V[m]).norm() < cfg.eps_plus;
        }
        if (!true_edge) ok.push_back(k);
      }
      subsample(ok, cfg.inaccurate_per_edge, rng);
      for (auto k : ok) sets.gt_neg.push_back({V[vi], pts[k], false, EdgeProvenance::GtInaccurate});
    }
  }
  sets.shortfall = sets.gt_neg.empty();
  return sets;
}

void build_pred_edge_sets(EdgeSets& sets, const Wireframe& gt, std::span<const Vec3> predicted,
                          const EdgeSetConfig& cfg, Rng& rng) {
  cfg.validate();
  sets.pred_pos.clear();
  sets.pred_neg.clear();
  std::vector<Nearest> near(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) near[i] = nearest_vertex(predicted[i], gt);

  auto is_spurious = [&](std::size_t k, std::size_t l) {
    return std::binary_search(sets.spurious.begin(), sets.spurious.end(), Edge(k, l));
  };
  std::vector<const EdgeSample*> inaccurate;
  for (const auto& s : sets.gt_neg) {
    if (s.provenance == EdgeProvenance::GtInaccurate) inaccurate.push_back(&s);
  }
  auto matches_inaccurate = [&](const Vec3& u, const Vec3& w) {
    for (const auto* s : inaccurate) {
      if (((u - s->a).norm() < cfg.eps_minus && (w - s->b).norm() < cfg.eps_minus) ||
          ((w - s->a).norm() < cfg.eps_minus && (u - s->b).norm() < cfg.eps_minus)) {
        return true;
      }
    }
    return false;
  };
  auto in_annulus = [&](const Nearest& n) { return n.distance >= cfg.eps1 && n.distance <= cfg.eps2; };

  for (std::size_t i = 0; i < predicted.size(); ++i) {
    for (std::size_t j = i + 1; j < predicted.size(); ++j) {
      const Vec3& u = predicted[i];
      const Vec3& w = predicted[j];
      if ((u - w).norm() == 0.0) continue;
      const Nearest& nu = near[i];
      const Nearest& nw = near[j];
      if (nu.distance < cfg.eps_plus && nw.distance < cfg.eps_plus && nu.vertex != nw.vertex &&
          gt.has_edge(nu.vertex, nw.vertex)) {
        sets.pred_pos.push_back({u, w, true, EdgeProvenance::PredPositive});
        continue;
      }
      bool wrong = nu.distance < cfg.eps_minus && nw.distance < cfg.eps_minus && nu.vertex != nw.vertex &&
                   is_spurious(nu.vertex, nw.vertex);
      if (wrong || matches_inaccurate(u, w)) {
        sets.pred_neg.push_back({u, w, false, EdgeProvenance::PredWrongLink});
        continue;
      }
      bool miss = nu.vertex != nw.vertex && ((in_annulus(nu) && nw.distance <= cfg.eps2) ||
                                             (in_annulus(nw) && nu.distance <= cfg.eps2));
      if (miss) sets.pred_neg.push_back({u, w, false, EdgeProvenance::PredNearMiss});
    }
  }
  subsample(sets.pred_pos, cfg.max_pred_samples, rng);
  subsample(sets.pred_neg, cfg.max_pred_samples, rng);
}

EdgeSets build_edge_sets(const Wireframe& gt, std::span<const Vec3> predicted, const CloudIndex& index,
                         const EdgeSetConfig& cfg, Rng& rng) {
  EdgeSets sets = build_gt_edge_sets(gt, index, cfg, rng);
  build_pred_edge_sets(sets, gt, predicted, cfg, rng);
  return sets;
}

}  // namespace pc2wf
