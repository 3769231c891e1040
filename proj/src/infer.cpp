#include "pc2wf/infer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "pc2wf/parallel.hpp"

namespace pc2wf {

void InferenceConfig::validate() const {
  if (!(vertex_nms_radius >= 0) || !(edge_nms_eta >= 0)) throw InvalidInput("NMS radii must be nonnegative");
  if (!(tau_spacing_factor > 0)) throw InvalidInput("surface tolerance factor must be positive");
  if (n_probe < 2) throw InvalidInput("surface test needs at least 2 probes");
  if (!(collinear_tol >= 0)) throw InvalidInput("collinear tolerance must be nonnegative");
  if (!(patch_coverage > 0)) throw InvalidInput("patch coverage must be positive");
}

namespace {

// Lexicographically smallest point, so seeding does not depend on input order.
std::size_t lowest_point(std::span<const Vec3> pts) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Vec3& p = pts[i];
    const Vec3& q = pts[best];
    if (std::tie(p.x(), p.y(), p.z()) < std::tie(q.x(), q.y(), q.z())) best = i;
  }
  return best;
}

}  // namespace

std::vector<ScoredVertex> predict_vertices(const CloudIndex& index, const Matrix& features,
                                           const HeadBundle& bundle, double prob_thresh, double patch_coverage,
                                           int threads) {
  const std::size_t m = bundle.config.m;
  if (index.size() < m) {
    throw InvalidInput("cloud has " + std::to_string(index.size()) + " points, fewer than the patch size " +
                       std::to_string(m));
  }
  const auto pts = index.points();
  auto seeds = farthest_point_sampling(pts, inference_seed_count(index.size(), m, patch_coverage), lowest_point(pts));

  std::vector<Patch> patches(seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t s) { patches[s] = geodesic_patch(index.graph(), seeds[s], m); });

  constexpr std::size_t chunk = 256;
  const std::size_t chunks = (patches.size() + chunk - 1) / chunk;
  std::vector<double> prob(patches.size());
  std::vector<std::optional<Vec3>> where(patches.size());
  parallel_for(chunks, threads, [&](std::size_t c) {
    std::span<const Patch> part(patches.data() + c * chunk, std::min(chunk, patches.size() - c * chunk));
    auto p = vertex_detect(part, features, bundle);
    std::vector<Patch> keep;
    std::vector<std::size_t> slot;
    for (std::size_t i = 0; i < part.size(); ++i) {
      prob[c * chunk + i] = p[i];
      if (p[i] >= prob_thresh) {
        keep.push_back(part[i]);
        slot.push_back(c * chunk + i);
      }
    }
    auto loc = vertex_localize(keep, features, pts, bundle);
    for (std::size_t i = 0; i < keep.size(); ++i) where[slot[i]] = loc[i].vertex;
  });

  std::vector<ScoredVertex> out;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (where[i]) out.push_back({*where[i], prob[i]});
  }
  return out;
}

std::vector<ScoredVertex> vertex_nms(std::span<const ScoredVertex> vertices, double radius) {
  std::vector<std::size_t> order(vertices.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return vertices[a].score > vertices[b].score; });
  std::vector<ScoredVertex> kept;
  for (auto i : order) {
    bool clear = std::all_of(kept.begin(), kept.end(), [&](const ScoredVertex& k) {
      return (k.position - vertices[i].position).norm() > radius;
    });
    if (clear) kept.push_back(vertices[i]);
  }
  return kept;
}

ScoredWireframe predict_edges(std::span<const ScoredVertex> vertices, const CloudIndex& index,
                              const Matrix& features, const HeadBundle& bundle, double tau_surf,
                              std::size_t n_probe, double prob_thresh, int threads,
                              EdgeCandidateStats* stats) {
  std::vector<Vec3> pos;
  std::vector<double> vscore;
  for (const auto& v : vertices) {
    pos.push_back(v.position);
    vscore.push_back(v.score);
  }
  EdgeCandidateStats st;
  std::vector<Edge> cand;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (std::size_t j = i + 1; j < pos.size(); ++j) {
      if ((pos[i] - pos[j]).norm() > 0.0) cand.emplace_back(i, j);
    }
  }
  st.candidates = cand.size();

  std::vector<char> on_surface(cand.size(), 0);
  parallel_for(cand.size(), threads, [&](std::size_t c) {
    auto t = segment_on_surface(pos[cand[c].a], pos[cand[c].b], index.tree(), tau_surf, n_probe);
    on_surface[c] = t.mean_distance <= tau_surf;
  });
  std::vector<Edge> survivors;
  for (std::size_t c = 0; c < cand.size(); ++c) {
    if (on_surface[c]) survivors.push_back(cand[c]);
  }
  st.pruned = cand.size() - survivors.size();
  st.verified = survivors.size();

  std::vector<double> score(survivors.size());
  constexpr std::size_t chunk = 256;
  const std::size_t chunks = (survivors.size() + chunk - 1) / chunk;
  const auto& cfg = bundle.config;
  parallel_for(chunks, threads, [&](std::size_t c) {
    std::size_t begin = c * chunk, end = std::min(survivors.size(), begin + chunk);
    Matrix desc(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(cfg.descriptor_dim()));
    for (std::size_t e = begin; e < end; ++e) {
      desc.row(static_cast<Eigen::Index>(e - begin)) =
          edge_descriptor(pos[survivors[e].a], pos[survivors[e].b], index.tree(), features, cfg.n_s, cfg.stride);
    }
    auto s = edge_verify_batch(desc, bundle);
    std::copy(s.begin(), s.end(), score.begin() + static_cast<long>(begin));
  });

  std::vector<Edge> edges;
  std::vector<double> escore;
  for (std::size_t e = 0; e < survivors.size(); ++e) {
    if (score[e] >= prob_thresh) {
      edges.push_back(survivors[e]);
      escore.push_back(score[e]);
    }
  }
  if (stats) *stats = st;
  return ScoredWireframe(Wireframe(std::move(pos), std::move(edges)), std::move(vscore), std::move(escore));
}

double edge_displacement(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return std::min((a - c).norm() + (b - d).norm(), (a - d).norm() + (b - c).norm());
}

ScoredWireframe edge_nms(const ScoredWireframe& wf, double eta) {
  const auto& V = wf.wireframe().vertices();
  const auto& E = wf.wireframe().edges();
  std::vector<std::size_t> order(E.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return wf.edge_scores()[x] > wf.edge_scores()[y]; });
  std::vector<std::size_t> kept;
  for (auto e : order) {
    bool clear = std::all_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return !(edge_displacement(V[E[e].a], V[E[e].b], V[E[k].a], V[E[k].b]) < eta);
    });
    if (clear) kept.push_back(e);
  }
  std::sort(kept.begin(), kept.end());
  std::vector<Edge> edges;
  std::vector<double> scores;
  for (auto e : kept) {
    edges.push_back(E[e]);
    scores.push_back(wf.edge_scores()[e]);
  }
  return ScoredWireframe(Wireframe(V, std::move(edges)), wf.vertex_scores(), std::move(scores));
}

ScoredWireframe straighten(const ScoredWireframe& wf, double collinear_tol) {
  const auto& V = wf.wireframe().vertices();
  std::vector<char> alive(V.size(), 1);
  std::map<Edge, double> edges;
  for (std::size_t e = 0; e < wf.wireframe().edge_count(); ++e) {
    edges[wf.wireframe().edges()[e]] = wf.edge_scores()[e];
  }
  auto neighbours = [&](std::size_t v) {
    std::vector<std::size_t> out;
    for (const auto& [e, s] : edges) {
      if (e.a == v) out.push_back(e.b);
      else if (e.b == v) out.push_back(e.a);
    }
    return out;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t v = 0; v < V.size() && !changed; ++v) {
      if (!alive[v]) continue;
      auto nb = neighbours(v);
      if (nb.size() != 2) continue;
      const std::size_t a = nb[0], c = nb[1];
      Vec3 u = V[a] - V[v], w = V[c] - V[v];
      if (u.norm() == 0.0 || w.norm() == 0.0 || (V[a] - V[c]).norm() == 0.0) continue;
      double cosang = std::clamp(u.dot(w) / (u.norm() * w.norm()), -1.0, 1.0);
      const bool straight = std::numbers::pi - std::acos(cosang) < collinear_tol;
      auto ac = edges.find(Edge(a, c));
      const bool thin = ac != edges.end() &&
                        point_segment_distance(V[v], V[a], V[c]) < collinear_tol * (V[a] - V[c]).norm();
      if (!straight && !thin) continue;
      double merged = std::min(edges.at(Edge(a, v)), edges.at(Edge(v, c)));
      edges.erase(Edge(a, v));
      edges.erase(Edge(v, c));
      alive[v] = 0;
      if (ac == edges.end()) {
        edges[Edge(a, c)] = merged;
      } else if (straight) {
        ac->second = std::max(ac->second, merged);
      }
      changed = true;
    }
  }

  std::vector<std::size_t> remap(V.size(), 0);
  std::vector<Vec3> verts;
  std::vector<double> vscores;
  for (std::size_t v = 0; v < V.size(); ++v) {
    if (!alive[v]) continue;
    remap[v] = verts.size();
    verts.push_back(V[v]);
    vscores.push_back(wf.vertex_scores()[v]);
  }
  std::vector<Edge> out_edges;
  std::vector<double> escores;
  for (const auto& [e, s] : edges) {
    out_edges.emplace_back(remap[e.a], remap[e.b]);
    escores.push_back(s);
  }
  return ScoredWireframe(Wireframe(std::move(verts), std::move(out_edges)), std::move(vscores), std::move(escores));
}

ScoredWireframe extract_from_index(const CloudIndex& index, const Matrix& features, const HeadBundle& bundle,
                                   const InferenceConfig& cfg, Extraction* details) {
  cfg.validate();
  auto raw = predict_vertices(index, features, bundle, cfg.vertex_thresh, cfg.patch_coverage, cfg.threads);
  auto verts = cfg.vertex_nms ? vertex_nms(raw, cfg.vertex_nms_radius) : raw;
  if (cfg.max_vertices > 0 && verts.size() > cfg.max_vertices) {
    std::stable_sort(verts.begin(), verts.end(),
                     [](const ScoredVertex& a, const ScoredVertex& b) { return a.score > b.score; });
    verts.resize(cfg.max_vertices);
  }
  EdgeCandidateStats stats;
  ScoredWireframe wf = predict_edges(verts, index, features, bundle, cfg.tau_spacing_factor * index.spacing(),
                                     cfg.n_probe, cfg.edge_thresh, cfg.threads, &stats);
  if (cfg.edge_nms) wf = edge_nms(wf, cfg.edge_nms_eta);
  if (cfg.straighten) wf = straighten(wf, cfg.collinear_tol);
  if (details) {
    details->raw_vertices = raw.size();
    details->edges = stats;
  }
  return wf;
}

Extraction extract_wireframe(const PointCloud& cloud, const HeadBundle& bundle, const InferenceConfig& cfg) {
  auto [normalized, transform] = normalize(cloud);
  const std::size_t k = std::max<std::size_t>(16, bundle.config.encoder.k);
  CloudIndex index(std::move(normalized), 8, k);
  PointContext ctx = make_point_context(index, bundle.config.encoder);
  Matrix features = bundle.encoder.encode(ctx, cfg.threads);
  Extraction out;
  out.transform = transform;
  out.normalized = extract_from_index(index, features, bundle, cfg, &out);
  out.world = ScoredWireframe(invert_wireframe(out.normalized.wireframe(), transform),
                              out.normalized.vertex_scores(), out.normalized.edge_scores());
  return out;
}

}  // namespace pc2wf
