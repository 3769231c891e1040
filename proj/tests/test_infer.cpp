#include <doctest.h>

#include <algorithm>
#include <numbers>

#include "pc2wf/infer.hpp"
#include "support.hpp"

using namespace pc2wf;

namespace {

ScoredWireframe path(const std::vector<Vec3>& pts, std::vector<double> escores = {}) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) e.emplace_back(i, i + 1);
  if (escores.empty()) escores.assign(e.size(), 1.0);
  return ScoredWireframe(Wireframe(pts, e), std::vector<double>(pts.size(), 1.0), escores);
}

}  // namespace

TEST_CASE("vertex NMS keeps a separated, score-ordered subset") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ScoredVertex> vs;
    for (int i = 0; i < 60; ++i) {
      vs.push_back({Vec3(uniform(rng, 0, 0.3), uniform(rng, 0, 0.3), 0), std::round(uniform(rng, 0, 1) * 10) / 10});
    }
    auto kept = vertex_nms(vs, 0.03);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = i + 1; j < kept.size(); ++j) CHECK((kept[i].position - kept[j].position).norm() >= 0.03);
    }
    // every dropped vertex is covered by a kept one at least as confident
    for (const auto& v : vs) {
      bool covered = std::any_of(kept.begin(), kept.end(), [&](const ScoredVertex& k) {
        return (k.position - v.position).norm() < 0.03 && k.score >= v.score;
      });
      bool present = std::any_of(kept.begin(), kept.end(), [&](const ScoredVertex& k) {
        return k.position == v.position && k.score == v.score;
      });
      CHECK((covered || present));
    }
    CHECK(vertex_nms(kept, 0.03).size() == kept.size());
  }
}

TEST_CASE("edge NMS leaves no pair closer than eta and keeps the best") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Vec3> v;
    for (int i = 0; i < 12; ++i) v.emplace_back(uniform(rng, 0, 0.1), uniform(rng, 0, 0.1), 0);
    std::vector<Edge> e;
    std::vector<double> s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (std::size_t j = i + 1; j < v.size(); ++j) {
        if (uniform(rng, 0, 1) < 0.4) {
          e.emplace_back(i, j);
          s.push_back(uniform(rng, 0, 1));
        }
      }
    }
    if (e.empty()) continue;
    ScoredWireframe wf(Wireframe(v, e), std::vector<double>(v.size(), 1.0), s);
    auto out = edge_nms(wf, 0.05);
    const auto& ov = out.wireframe().vertices();
    const auto& oe = out.wireframe().edges();
    for (std::size_t i = 0; i < oe.size(); ++i) {
      for (std::size_t j = i + 1; j < oe.size(); ++j) {
        CHECK(edge_displacement(ov[oe[i].a], ov[oe[i].b], ov[oe[j].a], ov[oe[j].b]) >= 0.05);
      }
    }
    CHECK(*std::max_element(out.edge_scores().begin(), out.edge_scores().end()) ==
          *std::max_element(s.begin(), s.end()));
    // every suppressed edge is near a kept edge with at least its score
    for (std::size_t i = 0; i < e.size(); ++i) {
      bool ok = false;
      for (std::size_t j = 0; j < oe.size(); ++j) {
        if (edge_displacement(v[e[i].a], v[e[i].b], ov[oe[j].a], ov[oe[j].b]) < 0.05 + 1e-15 &&
            out.edge_scores()[j] >= s[i]) {
          ok = true;
        }
      }
      CHECK(ok);
    }
  }
}

TEST_CASE("straightening merges collinear chains") {
  auto wf = path({{0, 0, 0}, {0.5, 0.001, 0}, {1, 0, 0}, {1, 1, 0}}, {0.9, 0.7, 0.8});
  auto s = straighten(wf, 0.05);
  CHECK(s.wireframe().vertex_count() == 3);
  REQUIRE(s.wireframe().edge_count() == 2);
  // merged edge takes the weaker score
  CHECK(std::count(s.edge_scores().begin(), s.edge_scores().end(), 0.7) == 1);
  // a real corner stays
  auto corner = straighten(path({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}}), 0.05);
  CHECK(corner.wireframe().vertex_count() == 3);
  // a long chain collapses fully, and a second pass changes nothing
  std::vector<Vec3> chain;
  for (int i = 0; i <= 6; ++i) chain.emplace_back(i * 0.1, 0, 0);
  auto c = straighten(path(chain), 0.05);
  CHECK(c.wireframe().vertex_count() == 2);
  CHECK(c.wireframe().edge_count() == 1);
  auto again = straighten(c, 0.05);
  CHECK(again.wireframe().vertices() == c.wireframe().vertices());
  CHECK(again.wireframe().edges() == c.wireframe().edges());
  // degree-3 vertices are never removed
  std::vector<Vec3> t{{0, 0, 0}, {0.5, 0, 0}, {1, 0, 0}, {0.5, 1, 0}};
  auto tee = straighten(ScoredWireframe::certain(Wireframe(t, {Edge(0, 1), Edge(1, 2), Edge(1, 3)})), 0.05);
  CHECK(tee.wireframe().vertex_count() == 4);
}

TEST_CASE("straightening folds a thin triangle into its long side") {
  std::vector<Vec3> v{{0, 0, 0}, {0.5, 0.01, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  // chain 0-1-2 plus the direct edge 0-2; other edges keep 0 and 2 at degree >= 3
  ScoredWireframe wf(Wireframe(v, {Edge(0, 1), Edge(1, 2), Edge(0, 2), Edge(0, 3), Edge(2, 4)}),
                     std::vector<double>(5, 1.0), {0.6, 0.6, 0.9, 1, 1});
  auto s = straighten(wf, 0.05);
  CHECK(s.wireframe().vertex_count() == 4);
  CHECK(s.wireframe().edge_count() == 3);
}

TEST_CASE("random wireframes: straighten is idempotent and never adds structure") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> v;
    for (int i = 0; i < 10; ++i) v.emplace_back(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
    // a few nearly collinear insertions
    v.push_back((v[0] + v[1]) / 2 + Vec3(0, 0, 0.001));
    std::vector<Edge> e{Edge(0, 10), Edge(10, 1)};
    for (std::size_t i = 0; i < 10; ++i) {
      for (std::size_t j = i + 1; j < 10; ++j) {
        if (uniform(rng, 0, 1) < 0.15 && !(i == 0 && j == 1)) e.emplace_back(i, j);
      }
    }
    std::vector<double> s;
    for (std::size_t i = 0; i < e.size(); ++i) s.push_back(uniform(rng, 0, 1));
    ScoredWireframe wf(Wireframe(v, e), std::vector<double>(v.size(), 1.0), s);
    auto once = straighten(wf, 0.05);
    auto twice = straighten(once, 0.05);
    CHECK(once.wireframe().vertex_count() <= wf.wireframe().vertex_count());
    CHECK(once.wireframe().edge_count() <= wf.wireframe().edge_count());
    CHECK(twice.wireframe().vertices() == once.wireframe().vertices());
    CHECK(twice.wireframe().edges() == once.wireframe().edges());
  }
}

TEST_CASE("untrained model extraction respects the candidate bound and frame") {
  Mesh mesh;
  auto cloud = testing::scan_shape(ShapeKind::Box, 600, 0.0, 3, &mesh);
  // move the cloud away from the unit cube so the inverse transform matters
  std::vector<Vec3> pts;
  for (const auto& p : cloud.points()) pts.push_back(p * 3.0 + Vec3(10, -4, 2));
  ModelConfig mc;
  auto bundle = HeadBundle::create(mc, 1);
  InferenceConfig ic;
  ic.max_vertices = 20;
  auto ex = extract_wireframe(PointCloud(pts), bundle, ic);
  const std::size_t k = std::min<std::size_t>(ex.normalized.wireframe().vertex_count(), 20);
  CHECK(ex.edges.candidates <= 20 * 19 / 2);
  CHECK(ex.edges.pruned + ex.edges.verified == ex.edges.candidates);
  CHECK(k <= 20);
  CHECK(ex.world.wireframe().vertex_count() == ex.normalized.wireframe().vertex_count());
  for (std::size_t i = 0; i < ex.world.wireframe().vertex_count(); ++i) {
    Vec3 back = ex.transform.invert(ex.normalized.wireframe().vertices()[i]);
    CHECK((back - ex.world.wireframe().vertices()[i]).norm() < 1e-9);
  }
  CHECK(ex.raw_vertices >= ex.normalized.wireframe().vertex_count());
}
