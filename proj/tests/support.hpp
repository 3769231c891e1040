#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Geometry>

#include "pc2wf/core.hpp"
#include "pc2wf/nn.hpp"
#include "pc2wf/rng.hpp"
#include "pc2wf/synth.hpp"

namespace testing {

using pc2wf::Edge;
using pc2wf::Matrix;
using pc2wf::Vec3;
using pc2wf::Wireframe;

inline Wireframe unit_cube_wireframe(double size = 1.0) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) v.emplace_back((i & 1) * size, ((i >> 1) & 1) * size, ((i >> 2) & 1) * size);
  std::vector<Edge> e;
  for (int i = 0; i < 8; ++i) {
    for (int bit : {1, 2, 4}) {
      if (!(i & bit)) e.emplace_back(i, i | bit);
    }
  }
  return Wireframe(v, e);
}

// Dense grid on the z = 0 plane.
inline std::vector<Vec3> plane_grid(int n, double step) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) pts.emplace_back(i * step, j * step, 0.0);
  }
  return pts;
}

inline pc2wf::PointCloud scan_shape(pc2wf::ShapeKind kind, int rays, double sigma, std::uint64_t seed,
                                    pc2wf::Mesh* mesh_out = nullptr) {
  pc2wf::ShapeParams params;
  pc2wf::Mesh mesh = pc2wf::make_shape(kind, params);
  pc2wf::ScanConfig cfg;
  cfg.rays_per_camera = rays;
  cfg.noise_sigma = sigma;
  cfg.seed = seed;
  if (mesh_out) *mesh_out = mesh;
  return pc2wf::virtual_scan(mesh, cfg);
}

// Max relative error between an analytic gradient and central differences of
// f with respect to every entry of `param` (absolute floor `floor`).
inline double gradient_error(pc2wf::Matrix& param, const pc2wf::Matrix& analytic,
                             const std::function<double()>& f, double h = 1e-5, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    double keep = param.data()[i];
    param.data()[i] = keep + h;
    double up = f();
    param.data()[i] = keep - h;
    double down = f();
    param.data()[i] = keep;
    double numeric = (up - down) / (2 * h);
    double a = analytic.data()[i];
    double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    if (std::abs(a - numeric) < floor) err = 0.0;
    worst = std::max(worst, err);
  }
  return worst;
}

inline Matrix random_matrix(pc2wf::Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  std::normal_distribution<double> g(0.0, scale);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace testing
