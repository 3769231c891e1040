#include "pc2wf/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <Eigen/Geometry>
#include <json.hpp>

#include "pc2wf/io.hpp"
#include "pc2wf/parallel.hpp"

namespace pc2wf {

namespace fs = std::filesystem;

namespace {

using Vec2 = Eigen::Vector2d;

const std::vector<std::pair<ShapeKind, std::string>>& kind_names() {
  static const std::vector<std::pair<ShapeKind, std::string>> names{
      {ShapeKind::Box, "box"},         {ShapeKind::LShape, "lshape"},
      {ShapeKind::Notch, "notch"},     {ShapeKind::Prism, "prism"},
      {ShapeKind::Staircase, "staircase"}, {ShapeKind::Table, "table"},
      {ShapeKind::TwoBoxes, "twoboxes"}};
  return names;
}

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool point_in_triangle(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  double d1 = cross2(b - a, p - a), d2 = cross2(c - b, p - b), d3 = cross2(a - c, p - c);
  return d1 >= 0 && d2 >= 0 && d3 >= 0;
}

double polygon_area(const std::vector<Vec2>& poly) {
  double s = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) s += cross2(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * s;
}

// Ear clipping for a simple counter-clockwise polygon.
std::vector<std::array<std::size_t, 3>> triangulate(const std::vector<Vec2>& poly) {
  std::vector<std::size_t> idx(poly.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<std::array<std::size_t, 3>> tris;
  while (idx.size() > 3) {
    bool clipped = false;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::size_t ip = idx[(k + idx.size() - 1) % idx.size()], ic = idx[k],
                  in = idx[(k + 1) % idx.size()];
      const Vec2 &a = poly[ip], &b = poly[ic], &c = poly[in];
      if (cross2(b - a, c - b) <= 0) continue;  // reflex or collinear
      bool contains = false;
      for (std::size_t o : idx) {
        if (o == ip || o == ic || o == in) continue;
        if (point_in_triangle(poly[o], a, b, c)) {
          contains = true;
          break;
        }
      }
      if (contains) continue;
      tris.push_back({ip, ic, in});
      idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(k));
      clipped = true;
      break;
    }
    if (!clipped) throw InvalidInput("profile polygon is not simple");
  }
  tris.push_back({idx[0], idx[1], idx[2]});
  return tris;
}

void orient_outward(Mesh& mesh) {
  double vol = 0;
  for (const auto& t : mesh.triangles) {
    vol += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
  }
  if (vol < 0) {
    for (auto& t : mesh.triangles) std::swap(t[1], t[2]);
  }
}

// Prism over a counter-clockwise profile in the (u, v) plane, extruded along
// t in [0, depth]; `to3d` maps (u, v, t) to world coordinates.
template <typename Map>
Mesh extrude(const std::vector<Vec2>& profile, double depth, Map to3d) {
  std::vector<Vec2> ccw = profile;
  if (polygon_area(ccw) < 0) std::reverse(ccw.begin(), ccw.end());
  const std::size_t n = ccw.size();
  Mesh mesh;
  for (double t : {0.0, depth}) {
    for (const auto& p : ccw) mesh.vertices.push_back(to3d(p.x(), p.y(), t));
  }
  auto bottom = [](std::size_t i) { return i; };
  auto top = [n](std::size_t i) { return n + i; };
  for (const auto& tri : triangulate(ccw)) {
    mesh.triangles.push_back({bottom(tri[0]), bottom(tri[2]), bottom(tri[1])});
    mesh.triangles.push_back({top(tri[0]), top(tri[1]), top(tri[2])});
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = (i + 1) % n;
    mesh.triangles.push_back({bottom(i), bottom(j), top(j)});
    mesh.triangles.push_back({bottom(i), top(j), top(i)});
    edges.emplace_back(bottom(i), bottom(j));
    edges.emplace_back(top(i), top(j));
    edges.emplace_back(bottom(i), top(i));
  }
  orient_outward(mesh);
  mesh.gt_wireframe = Wireframe(mesh.vertices, std::move(edges));
  return mesh;
}

struct Box3 {
  Vec3 lo, hi;
};

// Boundary of a union of axis-aligned boxes, tessellated on the rectilinear
// grid spanned by all box faces. Boxes must overlap only in face-connected ways.
Mesh orthogonal_union(const std::vector<Box3>& boxes) {
  std::array<std::vector<double>, 3> grid;
  for (const auto& b : boxes) {
    for (int a = 0; a < 3; ++a) {
      grid[a].push_back(b.lo[a]);
      grid[a].push_back(b.hi[a]);
    }
  }
  for (auto& g : grid) {
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
  }
  const std::array<std::size_t, 3> cells{grid[0].size() - 1, grid[1].size() - 1,
                                          grid[2].size() - 1};
  auto filled = [&](std::array<long, 3> c) {
    for (int a = 0; a < 3; ++a) {
      if (c[a] < 0 || c[a] >= static_cast<long>(cells[a])) return false;
    }
    Vec3 mid;
    for (int a = 0; a < 3; ++a) mid[a] = 0.5 * (grid[a][c[a]] + grid[a][c[a] + 1]);
    for (const auto& b : boxes) {
      if ((mid.array() > b.lo.array()).all() && (mid.array() < b.hi.array()).all()) return true;
    }
    return false;
  };

  Mesh mesh;
  std::map<std::array<std::size_t, 3>, std::size_t> vid;
  auto vertex = [&](std::array<std::size_t, 3> g) {
    auto [it, inserted] = vid.emplace(g, mesh.vertices.size());
    if (inserted) mesh.vertices.emplace_back(grid[0][g[0]], grid[1][g[1]], grid[2][g[2]]);
    return it->second;
  };

  for (long i = 0; i < static_cast<long>(cells[0]); ++i) {
    for (long j = 0; j < static_cast<long>(cells[1]); ++j) {
      for (long k = 0; k < static_cast<long>(cells[2]); ++k) {
        std::array<long, 3> c{i, j, k};
        if (!filled(c)) continue;
        for (int a = 0; a < 3; ++a) {
          for (int side : {0, 1}) {
            auto nb = c;
            nb[a] += side ? 1 : -1;
            if (filled(nb)) continue;
            int b = (a + 1) % 3, d = (a + 2) % 3;
            std::array<std::size_t, 4> q;
            const std::array<std::pair<int, int>, 4> corners{
                std::pair{0, 0}, std::pair{1, 0}, std::pair{1, 1}, std::pair{0, 1}};
            for (int m = 0; m < 4; ++m) {
              std::array<std::size_t, 3> g;
              g[a] = static_cast<std::size_t>(c[a] + side);
              g[b] = static_cast<std::size_t>(c[b] + corners[m].first);
              g[d] = static_cast<std::size_t>(c[d] + corners[m].second);
              q[m] = vertex(g);
            }
            // (b, d) corner order winds around +a.
            if (side) {
              mesh.triangles.push_back({q[0], q[1], q[2]});
              mesh.triangles.push_back({q[0], q[2], q[3]});
            } else {
              mesh.triangles.push_back({q[0], q[2], q[1]});
              mesh.triangles.push_back({q[0], q[3], q[2]});
            }
          }
        }
      }
    }
  }
  return mesh;
}

// Wireframe of a box: 8 corners, 12 edges, appended to (vs, es).
void append_box_wireframe(const Box3& b, std::vector<Vec3>& vs, std::vector<Edge>& es) {
  std::size_t base = vs.size();
  for (int m = 0; m < 8; ++m) {
    vs.emplace_back(m & 1 ? b.hi.x() : b.lo.x(), m & 2 ? b.hi.y() : b.lo.y(),
                    m & 4 ? b.hi.z() : b.lo.z());
  }
  for (int m = 0; m < 8; ++m) {
    for (int bit : {1, 2, 4}) {
      if (!(m & bit)) es.emplace_back(base + m, base + (m | bit));
    }
  }
}

void check_fraction(double f, const char* name) {
  if (!(f > 0.0 && f < 1.0)) {
    throw InvalidInput(std::string("shape fraction '") + name + "' must lie in (0, 1)");
  }
}

auto xz_extrusion(double) {
  return [](double u, double v, double t) { return Vec3(u, t, v); };
}

}  // namespace

std::string to_string(ShapeKind kind) {
  for (const auto& [k, name] : kind_names()) {
    if (k == kind) return name;
  }
  return "unknown";
}

ShapeKind shape_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kind_names()) {
    if (n == name) return k;
  }
  throw InvalidInput("unknown shape family '" + name + "'");
}

const std::vector<ShapeKind>& all_shape_kinds() {
  static const std::vector<ShapeKind> kinds{ShapeKind::Box,       ShapeKind::LShape,
                                            ShapeKind::Notch,     ShapeKind::Prism,
                                            ShapeKind::Staircase, ShapeKind::Table,
                                            ShapeKind::TwoBoxes};
  return kinds;
}

Mesh make_shape(ShapeKind kind, const ShapeParams& p) {
  if (!(p.size.array() > 0.0).all()) throw InvalidInput("shape dimensions must be positive");
  const double sx = p.size.x(), sy = p.size.y(), sz = p.size.z();
  switch (kind) {
    case ShapeKind::Box:
      return extrude({{0, 0}, {sx, 0}, {sx, sy}, {0, sy}}, sz,
                     [](double u, double v, double t) { return Vec3(u, v, t); });
    case ShapeKind::LShape: {
      check_fraction(p.a, "a");
      check_fraction(p.b, "b");
      double ax = p.a * sx, bz = p.b * sz;
      return extrude({{0, 0}, {sx, 0}, {sx, bz}, {ax, bz}, {ax, sz}, {0, sz}}, sy,
                     xz_extrusion(sy));
    }
    case ShapeKind::Notch: {
      check_fraction(p.a, "a");
      check_fraction(p.b, "b");
      double w = p.a * sx, x1 = 0.5 * (sx - w), d = p.b * sz;
      return extrude({{0, 0},
                      {sx, 0},
                      {sx, sz},
                      {x1 + w, sz},
                      {x1 + w, sz - d},
                      {x1, sz - d},
                      {x1, sz},
                      {0, sz}},
                     sy, xz_extrusion(sy));
    }
    case ShapeKind::Prism: {
      if (p.sides < 3) throw InvalidInput("prism needs at least 3 sides");
      double r = 0.5 * std::min(sx, sy);
      std::vector<Vec2> poly;
      for (int i = 0; i < p.sides; ++i) {
        double ang = p.twist + 2.0 * std::numbers::pi * i / p.sides;
        poly.emplace_back(r + r * std::cos(ang), r + r * std::sin(ang));
      }
      return extrude(poly, sz, [](double u, double v, double t) { return Vec3(u, v, t); });
    }
    case ShapeKind::Staircase: {
      if (p.steps < 1) throw InvalidInput("staircase needs at least one step");
      check_fraction(p.a, "a");
      check_fraction(p.b, "b");
      const int n = p.steps;
      double x0 = p.a * sx, z0 = p.b * sz;
      auto xs = [&](int i) { return x0 + (sx - x0) * i / n; };
      auto zs = [&](int i) { return z0 + (sz - z0) * i / n; };
      std::vector<Vec2> prof{{0, 0}, {sx, 0}};
      for (int i = n; i >= 1; --i) {
        prof.emplace_back(xs(i), zs(i));
        prof.emplace_back(xs(i - 1), zs(i));
      }
      prof.emplace_back(xs(0), zs(0));
      prof.emplace_back(0, zs(0));
      return extrude(prof, sy, xz_extrusion(sy));
    }
    case ShapeKind::Table: {
      check_fraction(p.a, "a");
      check_fraction(p.b, "b");
      double t = p.b * sz;
      double span = std::min(sx, sy);
      double leg = p.a * 0.3 * span, margin = 0.1 * span;
      double top = sz - t;
      std::vector<Box3> boxes{{Vec3(0, 0, top), Vec3(sx, sy, sz)}};
      for (double lx : {margin, sx - margin - leg}) {
        for (double ly : {margin, sy - margin - leg}) {
          boxes.push_back({Vec3(lx, ly, 0), Vec3(lx + leg, ly + leg, top)});
        }
      }
      Mesh mesh = orthogonal_union(boxes);
      std::vector<Vec3> vs;
      std::vector<Edge> es;
      for (const auto& b : boxes) append_box_wireframe(b, vs, es);
      mesh.gt_wireframe = Wireframe(std::move(vs), std::move(es));
      return mesh;
    }
    case ShapeKind::TwoBoxes: {
      check_fraction(p.a, "a");
      check_fraction(p.b, "b");
      double h0 = p.b * sz;
      double wx = p.a * sx, wy = p.a * sy;
      Box3 base{Vec3(0, 0, 0), Vec3(sx, sy, h0)};
      Box3 upper{Vec3(0.5 * (sx - wx), 0.5 * (sy - wy), h0),
                 Vec3(0.5 * (sx + wx), 0.5 * (sy + wy), sz)};
      Mesh mesh = orthogonal_union({base, upper});
      std::vector<Vec3> vs;
      std::vector<Edge> es;
      append_box_wireframe(base, vs, es);
      append_box_wireframe(upper, vs, es);
      mesh.gt_wireframe = Wireframe(std::move(vs), std::move(es));
      return mesh;
    }
  }
  throw InvalidInput("unhandled shape family");
}

ShapeParams random_shape_params(ShapeKind kind, Rng& rng) {
  ShapeParams p;
  p.size = Vec3(uniform(rng, 0.5, 1.0), uniform(rng, 0.5, 1.0), uniform(rng, 0.5, 1.0));
  p.a = uniform(rng, 0.35, 0.65);
  p.b = uniform(rng, 0.35, 0.65);
  p.sides = 3 + static_cast<int>(uniform_index(rng, 6));
  p.steps = 2 + static_cast<int>(uniform_index(rng, 2));
  p.twist = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  switch (kind) {
    case ShapeKind::Table:
      p.b = uniform(rng, 0.12, 0.25);
      p.a = uniform(rng, 0.5, 0.9);
      break;
    case ShapeKind::Staircase:
      p.a = uniform(rng, 0.2, 0.4);
      p.b = uniform(rng, 0.25, 0.45);
      p.size.x() = uniform(rng, 0.8, 1.0);
      p.size.z() = uniform(rng, 0.7, 1.0);
      break;
    default:
      break;
  }
  p.size /= p.size.maxCoeff();
  return p;
}

std::vector<Vec3> scanner_directions() {
  std::vector<Vec3> dirs{Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(),
                         -Vec3::UnitY(), Vec3::UnitZ(), -Vec3::UnitZ()};
  for (int m = 0; m < 8; ++m) {
    dirs.push_back(Vec3(m & 1 ? 1 : -1, m & 2 ? 1 : -1, m & 4 ? 1 : -1).normalized());
  }
  return dirs;
}

void ScanConfig::validate() const {
  if (cameras < 1) throw InvalidInput("scanner needs at least one camera");
  if (rays_per_camera < 1) throw InvalidInput("scanner needs at least one ray per camera");
  if (!(noise_sigma >= 0.0)) throw InvalidInput("noise sigma must be non-negative");
  if (!(noise_clip >= 0.0)) throw InvalidInput("noise clip must be non-negative");
}

namespace {

std::vector<Vec3> camera_directions(int cameras) {
  auto dirs = scanner_directions();
  if (cameras <= static_cast<int>(dirs.size())) {
    dirs.resize(static_cast<std::size_t>(cameras));
    return dirs;
  }
  // Extra cameras on a Fibonacci sphere.
  int extra = cameras - static_cast<int>(dirs.size());
  for (int i = 0; i < extra; ++i) {
    double z = 1.0 - 2.0 * (i + 0.5) / extra;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = i * std::numbers::pi * (3.0 - std::sqrt(5.0));
    dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return dirs;
}

// Möller-Trumbore; returns the ray parameter or +inf.
double ray_triangle(const Vec3& o, const Vec3& d, const Vec3& v0, const Vec3& e1,
                    const Vec3& e2) {
  constexpr double kEps = 1e-14;
  Vec3 pv = d.cross(e2);
  double det = e1.dot(pv);
  if (std::abs(det) < kEps) return std::numeric_limits<double>::infinity();
  double inv = 1.0 / det;
  Vec3 tv = o - v0;
  double u = tv.dot(pv) * inv;
  if (u < -1e-12 || u > 1.0 + 1e-12) return std::numeric_limits<double>::infinity();
  Vec3 qv = tv.cross(e1);
  double v = d.dot(qv) * inv;
  if (v < -1e-12 || u + v > 1.0 + 1e-12) return std::numeric_limits<double>::infinity();
  double t = e2.dot(qv) * inv;
  return t > 1e-12 ? t : std::numeric_limits<double>::infinity();
}

std::vector<Vec3> scan_camera(const Mesh& mesh, const Vec3& dir, int rays, Rng& rng) {
  Vec3 helper = std::abs(dir.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  Vec3 u = dir.cross(helper).normalized();
  Vec3 w = dir.cross(u).normalized();

  Vec3 center = Vec3::Zero();
  for (const auto& v : mesh.vertices) center += v;
  center /= static_cast<double>(mesh.vertices.size());
  double umin = 1e300, umax = -1e300, wmin = 1e300, wmax = -1e300, reach = 0;
  for (const auto& v : mesh.vertices) {
    Vec3 r = v - center;
    umin = std::min(umin, r.dot(u));
    umax = std::max(umax, r.dot(u));
    wmin = std::min(wmin, r.dot(w));
    wmax = std::max(wmax, r.dot(w));
    reach = std::max(reach, r.norm());
  }
  const double margin = 1e-3 * std::max(umax - umin, wmax - wmin);
  umin -= margin;
  umax += margin;
  wmin -= margin;
  wmax += margin;

  const auto g = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(rays))));
  std::vector<std::size_t> ids(g * g);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<char> selected(g * g, 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(rays); ++i) selected[ids[i]] = 1;

  const double du = (umax - umin) / g, dw = (wmax - wmin) / g;
  std::vector<double> best(g * g, std::numeric_limits<double>::infinity());
  const Vec3 ray_dir = -dir;
  const double lift = 2.0 * reach + 1.0;
  auto origin = [&](std::size_t i, std::size_t j) {
    return Vec3(center + u * (umin + (i + 0.5) * du) + w * (wmin + (j + 0.5) * dw) + dir * lift);
  };

  // Each triangle only tests the rays inside its projected bounding rectangle.
  for (const auto& t : mesh.triangles) {
    const Vec3 &v0 = mesh.vertices[t[0]], &v1 = mesh.vertices[t[1]], &v2 = mesh.vertices[t[2]];
    double tu0 = 1e300, tu1 = -1e300, tw0 = 1e300, tw1 = -1e300;
    for (const Vec3* v : {&v0, &v1, &v2}) {
      Vec3 r = *v - center;
      tu0 = std::min(tu0, r.dot(u));
      tu1 = std::max(tu1, r.dot(u));
      tw0 = std::min(tw0, r.dot(w));
      tw1 = std::max(tw1, r.dot(w));
    }
    auto lo_idx = [](double x, double lo, double step, std::size_t n) {
      double f = std::floor((x - lo) / step - 0.5) - 1;
      return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(n - 1)));
    };
    auto hi_idx = [](double x, double lo, double step, std::size_t n) {
      double f = std::ceil((x - lo) / step - 0.5) + 1;
      return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(n - 1)));
    };
    std::size_t i0 = lo_idx(tu0, umin, du, g), i1 = hi_idx(tu1, umin, du, g);
    std::size_t j0 = lo_idx(tw0, wmin, dw, g), j1 = hi_idx(tw1, wmin, dw, g);
    Vec3 e1 = v1 - v0, e2 = v2 - v0;
    for (std::size_t i = i0; i <= i1; ++i) {
      for (std::size_t j = j0; j <= j1; ++j) {
        std::size_t id = i * g + j;
        if (!selected[id]) continue;
        double hit = ray_triangle(origin(i, j), ray_dir, v0, e1, e2);
        if (hit < best[id]) best[id] = hit;
      }
    }
  }

  std::vector<Vec3> hits;
  for (std::size_t id = 0; id < g * g; ++id) {
    if (!selected[id] || !std::isfinite(best[id])) continue;
    hits.push_back(origin(id / g, id % g) + ray_dir * best[id]);
  }
  return hits;
}

}  // namespace

PointCloud virtual_scan(const Mesh& mesh, const ScanConfig& cfg, int threads) {
  cfg.validate();
  if (mesh.triangles.empty()) throw InvalidInput("cannot scan an empty mesh");
  auto dirs = camera_directions(cfg.cameras);
  std::vector<std::vector<Vec3>> per_camera(dirs.size());
  parallel_for(dirs.size(), threads, [&](std::size_t c) {
    Rng ray_rng = make_rng(cfg.seed, "scan-rays", c);
    auto hits = scan_camera(mesh, dirs[c], cfg.rays_per_camera, ray_rng);
    if (cfg.noise_sigma > 0.0 && cfg.noise_clip > 0.0) {
      Rng noise_rng = make_rng(cfg.seed, "scan-noise", c);
      std::normal_distribution<double> gauss(0.0, cfg.noise_sigma);
      for (auto& h : hits) {
        for (int k = 0; k < 3; ++k) {
          double x;
          do {
            x = gauss(noise_rng);
          } while (std::abs(x) > cfg.noise_clip);
          h[k] += x;
        }
      }
    }
    per_camera[c] = std::move(hits);
  });
  std::vector<Vec3> all;
  for (auto& v : per_camera) all.insert(all.end(), v.begin(), v.end());
  if (all.empty()) throw InvalidInput("virtual scan produced no ray hits");
  return PointCloud(std::move(all));
}

Sample make_sample(std::size_t index, ShapeKind kind, const ScanConfig& scan,
                   std::uint64_t seed, int threads) {
  Rng shape_rng = make_rng(seed, "shape", index);
  ShapeParams params = random_shape_params(kind, shape_rng);
  Mesh mesh = make_shape(kind, params);
  ScanConfig cfg = scan;
  cfg.seed = derive_seed(seed, "scan", index);
  PointCloud raw = virtual_scan(mesh, cfg, threads);

  char name[64];
  std::snprintf(name, sizeof(name), "%s_%04zu", to_string(kind).c_str(), index);
  auto [cloud, transform] = normalize(raw);
  cloud = PointCloud(cloud.points(), name);
  Wireframe gt = transform_wireframe(mesh.gt_wireframe, transform);

  nlohmann::ordered_json meta;
  meta["name"] = name;
  meta["family"] = to_string(kind);
  meta["index"] = index;
  meta["seed"] = seed;
  meta["params"] = {{"size", {params.size.x(), params.size.y(), params.size.z()}},
                    {"sides", params.sides},
                    {"steps", params.steps},
                    {"a", params.a},
                    {"b", params.b},
                    {"twist", params.twist}};
  meta["scan"] = {{"cameras", cfg.cameras},
                  {"rays_per_camera", cfg.rays_per_camera},
                  {"noise_sigma", cfg.noise_sigma},
                  {"noise_clip", cfg.noise_clip},
                  {"seed", cfg.seed}};
  meta["normalization"] = {{"offset", {transform.offset.x(), transform.offset.y(),
                                       transform.offset.z()}},
                           {"scale", transform.scale}};
  meta["points"] = cloud.size();
  return Sample{name, std::move(cloud), std::move(gt), meta.dump(2) + "\n"};
}

void write_sample(const Sample& sample, const fs::path& dir) {
  write_cloud(dir / (sample.name + ".xyz"), sample.cloud);
  write_wireframe_json(dir / (sample.name + ".wf.json"), sample.gt);
  write_text_file(dir / (sample.name + ".meta.json"), sample.provenance);
}

DatasetSummary make_dataset(const DatasetSpec& spec, const fs::path& out_dir, int threads) {
  if (spec.count < 3) throw InvalidInput("a dataset needs at least 3 samples");
  if (spec.families.empty()) throw InvalidInput("no shape families selected");
  spec.scan.validate();
  double total = spec.train_ratio + spec.val_ratio + spec.test_ratio;
  if (!(total > 0) || spec.train_ratio < 0 || spec.val_ratio < 0 || spec.test_ratio < 0) {
    throw InvalidInput("split ratios must be non-negative with a positive sum");
  }
  DatasetSummary summary;
  summary.train = static_cast<std::size_t>(std::llround(spec.count * spec.train_ratio / total));
  summary.val = static_cast<std::size_t>(std::llround(spec.count * spec.val_ratio / total));
  summary.train = std::min(summary.train, spec.count);
  summary.val = std::min(summary.val, spec.count - summary.train);
  summary.test = spec.count - summary.train - summary.val;

  std::error_code ec;
  for (const char* split : {"train", "val", "test"}) {
    fs::create_directories(out_dir / split, ec);
    if (ec) throw Error("cannot create " + (out_dir / split).string() + ": " + ec.message());
  }

  std::vector<std::size_t> order(spec.count);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng = make_rng(spec.seed, "split");
  std::shuffle(order.begin(), order.end(), split_rng);
  std::vector<std::string> split_of(spec.count);
  for (std::size_t r = 0; r < order.size(); ++r) {
    split_of[order[r]] = r < summary.train ? "train" : r < summary.train + summary.val ? "val" : "test";
  }

  for (std::size_t i = 0; i < spec.count; ++i) {
    ShapeKind kind = spec.families[i % spec.families.size()];
    Sample s = make_sample(i, kind, spec.scan, spec.seed, threads);
    fs::path dir = out_dir / split_of[i];
    write_sample(s, dir);
    summary.samples.push_back(dir / (s.name + ".xyz"));
  }
  return summary;
}

}  // namespace pc2wf
