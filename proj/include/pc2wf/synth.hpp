#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pc2wf/core.hpp"
#include "pc2wf/rng.hpp"

namespace pc2wf {

enum class ShapeKind { Box, LShape, Notch, Prism, Staircase, Table, TwoBoxes };

std::string to_string(ShapeKind kind);
// Accepts the names produced by to_string ("box", "lshape", ...).
ShapeKind shape_kind_from_string(const std::string& name);
const std::vector<ShapeKind>& all_shape_kinds();

// Dimension record. `size` is the bounding box; the fractions shape the
// family-specific features (arm widths, notch, step landing, leg size, ...).
struct ShapeParams {
  Vec3 size{1.0, 1.0, 1.0};
  int sides = 6;     // prism polygon
  int steps = 3;     // staircase
  double a = 0.5;    // first shape fraction, in (0, 1)
  double b = 0.5;    // second shape fraction, in (0, 1)
  double twist = 0;  // prism polygon phase (radians)
};

// Throws InvalidInput on non-positive dimensions, fractions outside (0, 1),
// sides < 3 or steps < 1.
Mesh make_shape(ShapeKind kind, const ShapeParams& params);

// Random parameters with the longest extent equal to 1.
ShapeParams random_shape_params(ShapeKind kind, Rng& rng);

// The 14 viewing directions: 6 axis directions followed by the 8 cube diagonals.
std::vector<Vec3> scanner_directions();

struct ScanConfig {
  int cameras = 14;
  int rays_per_camera = 16000;
  double noise_sigma = 0.01;
  double noise_clip = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

// Parallel-ray virtual scan: first hit of every ray from every camera, then
// per-coordinate Gaussian jitter resampled until inside [-clip, clip].
// Each camera draws from its own seeded stream.
PointCloud virtual_scan(const Mesh& mesh, const ScanConfig& cfg, int threads = 1);

struct DatasetSpec {
  std::size_t count = 10;
  double train_ratio = 0.6;
  double val_ratio = 0.2;
  double test_ratio = 0.2;
  std::vector<ShapeKind> families{ShapeKind::Box, ShapeKind::LShape, ShapeKind::Prism,
                                  ShapeKind::Staircase};
  ScanConfig scan;
  std::uint64_t seed = 0;
};

struct DatasetSummary {
  std::size_t train = 0, val = 0, test = 0;
  std::vector<std::filesystem::path> samples;  // cloud paths, in generation order
};

struct Sample {
  std::string name;
  PointCloud cloud;         // normalised
  Wireframe gt;             // normalised with the cloud's transform
  std::string provenance;   // JSON record
};

Sample make_sample(std::size_t index, ShapeKind kind, const ScanConfig& scan,
                   std::uint64_t seed, int threads = 1);

// Writes {train,val,test}/{name}.xyz, {name}.wf.json and {name}.meta.json.
DatasetSummary make_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir,
                            int threads = 1);

// Writes a single sample's files directly into `dir`.
void write_sample(const Sample& sample, const std::filesystem::path& dir);

}  // namespace pc2wf
