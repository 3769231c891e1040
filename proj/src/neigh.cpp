#include "pc2wf/neigh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_map>
#include <unordered_set>

namespace pc2wf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::vector<Neighbor>> nearest_lists(std::span<const Vec3> points, const KdTree& tree,
                                                 std::size_t k) {
  std::vector<std::vector<Neighbor>> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto nn = tree.knn(points[i], k + 1);
    out[i].reserve(k);
    for (const auto& n : nn) {
      if (n.index != i && out[i].size() < k) out[i].push_back(n);
    }
  }
  return out;
}

}  // namespace

KnnGraph build_knn_graph(const std::vector<std::vector<Neighbor>>& nearest, std::size_t k) {
  KnnGraph g;
  g.k = k;
  g.adjacency.resize(nearest.size());
  for (std::size_t i = 0; i < nearest.size(); ++i) {
    for (std::size_t j = 0; j < std::min(k, nearest[i].size()); ++j) {
      const Neighbor& n = nearest[i][j];
      g.adjacency[i].push_back(n);
      g.adjacency[n.index].push_back(Neighbor{i, n.distance});
    }
  }
  for (auto& adj : g.adjacency) {
    std::sort(adj.begin(), adj.end(),
              [](const Neighbor& x, const Neighbor& y) { return x.index < y.index; });
    adj.erase(std::unique(adj.begin(), adj.end(),
                          [](const Neighbor& x, const Neighbor& y) { return x.index == y.index; }),
              adj.end());
  }
  return g;
}

KnnGraph build_knn_graph(std::span<const Vec3> points, std::size_t k) {
  if (points.size() <= k) {
    throw InvalidInput("kNN graph needs more than k=" + std::to_string(k) + " points, got " +
                       std::to_string(points.size()));
  }
  KdTree tree(points);
  return build_knn_graph(nearest_lists(points, tree, k), k);
}

std::vector<double> dijkstra(const KnnGraph& graph, std::size_t source) {
  std::vector<double> dist(graph.size(), kInf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[source] = 0.0;
  pq.emplace(0.0, source);
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (const auto& n : graph.adjacency[u]) {
      double nd = d + n.distance;
      if (nd < dist[n.index]) {
        dist[n.index] = nd;
        pq.emplace(nd, n.index);
      }
    }
  }
  return dist;
}

Patch geodesic_patch(const KnnGraph& graph, std::size_t seed, std::size_t m) {
  if (seed >= graph.size()) throw InvalidInput("patch seed out of range");
  if (m == 0) throw InvalidInput("patch size must be positive");
  Patch patch;
  patch.seed = seed;
  patch.members.reserve(m);

  // Lazy Dijkstra that stops after M settled nodes; (distance, index) ordering
  // in the queue gives index tie-breaking.
  std::unordered_map<std::size_t, double> dist;
  std::unordered_set<std::size_t> settled;
  dist.reserve(m * 16);
  settled.reserve(m * 2);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  pq.emplace(0.0, seed);
  dist[seed] = 0.0;
  while (!pq.empty() && patch.members.size() < m) {
    auto [d, u] = pq.top();
    pq.pop();
    if (!settled.insert(u).second) continue;
    patch.members.push_back(u);
    for (const auto& n : graph.adjacency[u]) {
      double nd = d + n.distance;
      auto [it, inserted] = dist.emplace(n.index, nd);
      if (inserted || nd < it->second) {
        it->second = nd;
        pq.emplace(nd, n.index);
      }
    }
  }
  if (patch.members.size() < m) {
    throw InvalidInput("connected component of seed " + std::to_string(seed) + " has only " +
                       std::to_string(patch.members.size()) + " points, patch needs " +
                       std::to_string(m));
  }
  return patch;
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points, std::size_t count,
                                                 std::size_t start) {
  if (count > points.size()) {
    throw InvalidInput("cannot draw " + std::to_string(count) + " seeds from " +
                       std::to_string(points.size()) + " points");
  }
  if (count == 0) return {};
  if (start >= points.size()) throw InvalidInput("FPS start index out of range");
  std::vector<std::size_t> seeds{start};
  seeds.reserve(count);
  std::vector<double> mind(points.size(), kInf);
  std::size_t last = start;
  while (seeds.size() < count) {
    std::size_t best = 0;
    double best_d = -1.0;
    const Vec3 q = points[last];
    for (std::size_t i = 0; i < points.size(); ++i) {
      double d = (points[i] - q).squaredNorm();
      if (d < mind[i]) mind[i] = d;
      if (mind[i] > best_d) {
        best_d = mind[i];
        best = i;
      }
    }
    seeds.push_back(best);
    last = best;
  }
  return seeds;
}

std::size_t inference_seed_count(std::size_t n, std::size_t m, double coverage) {
  if (!(coverage > 0)) throw InvalidInput("patch coverage must be positive");
  double per_seed = std::max(1.0, static_cast<double>(m) / coverage);
  return std::min(n, static_cast<std::size_t>(std::ceil(static_cast<double>(n) / per_seed)));
}

CloudIndex::CloudIndex(PointCloud cloud, std::size_t graph_k, std::size_t neighbor_k)
    : cloud_(std::make_shared<const PointCloud>(std::move(cloud))) {
  tree_ = std::make_shared<const KdTree>(cloud_->points());
  std::size_t k = std::max(graph_k, neighbor_k);
  neighbors_ = nearest_lists(cloud_->points(), *tree_, std::min(k, cloud_->size() - 1));
  graph_ = build_knn_graph(neighbors_, std::min(graph_k, cloud_->size() - 1));
  double sum = 0.0;
  for (const auto& nn : neighbors_) sum += nn.empty() ? 0.0 : nn.front().distance;
  spacing_ = sum / static_cast<double>(cloud_->size());
}

double distance_to_vertices(const Vec3& p, const Wireframe& wf) {
  double best = kInf;
  for (const auto& v : wf.vertices()) best = std::min(best, (p - v).norm());
  return best;
}

double distance_to_edges(const Vec3& p, const Wireframe& wf) {
  double best = kInf;
  for (const auto& e : wf.edges()) {
    best = std::min(best, point_segment_distance(p, wf.vertices()[e.a], wf.vertices()[e.b]));
  }
  return best;
}

PatchSample sample_training_patches(const CloudIndex& index, const Wireframe& gt,
                                    const PatchSamplingConfig& cfg, Rng& rng) {
  if (gt.vertex_count() == 0) throw InvalidInput("patch sampling needs a wireframe with vertices");
  PatchSample out;
  const auto pts = index.points();

  auto corner_free = [&](const Patch& p) {
    return std::all_of(p.members.begin(), p.members.end(), [&](std::size_t i) {
      return distance_to_vertices(pts[i], gt) >= cfg.r_pos;
    });
  };

  // Positives: cycle through the corners in random order.
  std::vector<std::size_t> corners(gt.vertex_count());
  for (std::size_t i = 0; i < corners.size(); ++i) corners[i] = i;
  std::shuffle(corners.begin(), corners.end(), rng);
  std::size_t cursor = 0, attempts = 0;
  while (out.positives < cfg.n_pos && attempts < cfg.max_attempts * std::max<std::size_t>(cfg.n_pos, 1)) {
    ++attempts;
    const Vec3& v = gt.vertices()[corners[cursor++ % corners.size()]];
    auto cand = index.tree().radius(v, cfg.pos_seed_radius);
    if (cand.empty()) continue;
    std::sort(cand.begin(), cand.end());
    Patch p = geodesic_patch(index.graph(), cand[uniform_index(rng, cand.size())], cfg.m);
    bool contains = std::any_of(p.members.begin(), p.members.end(), [&](std::size_t i) {
      return (pts[i] - v).norm() < cfg.r_pos;
    });
    if (!contains) continue;
    p.label = PatchLabel::Vertex;
    p.gt_vertex = v;
    out.patches.push_back(std::move(p));
    ++out.positives;
  }

  const auto n_edge = static_cast<std::size_t>(
      std::llround(static_cast<double>(cfg.n_neg) * std::clamp(cfg.neg_edge_fraction, 0.0, 1.0)));
  const std::size_t n_flat = cfg.n_neg - n_edge;

  if (gt.edge_count() > 0) {
    attempts = 0;
    while (out.edge_negatives < n_edge && attempts < cfg.max_attempts * n_edge) {
      ++attempts;
      const Edge& e = gt.edges()[uniform_index(rng, gt.edge_count())];
      double t = uniform(rng, 0.0, 1.0);
      Vec3 q = gt.vertices()[e.a] + t * (gt.vertices()[e.b] - gt.vertices()[e.a]);
      std::size_t seed = index.tree().nearest(q).index;
      if (distance_to_vertices(pts[seed], gt) < cfg.r_pos) continue;
      Patch p = geodesic_patch(index.graph(), seed, cfg.m);
      if (!corner_free(p)) continue;
      p.label = PatchLabel::NoVertex;
      out.patches.push_back(std::move(p));
      ++out.edge_negatives;
    }
  }

  attempts = 0;
  while (out.flat_negatives < n_flat && attempts < cfg.max_attempts * n_flat) {
    ++attempts;
    std::size_t seed = uniform_index(rng, pts.size());
    if (gt.edge_count() > 0 && distance_to_edges(pts[seed], gt) < cfg.flat_margin) continue;
    Patch p = geodesic_patch(index.graph(), seed, cfg.m);
    if (!corner_free(p)) continue;
    p.label = PatchLabel::NoVertex;
    out.patches.push_back(std::move(p));
    ++out.flat_negatives;
  }

  out.shortfall = out.positives < cfg.n_pos || out.edge_negatives + out.flat_negatives < cfg.n_neg;
  return out;
}

}  // namespace pc2wf
