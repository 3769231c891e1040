#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pc2wf/backbone.hpp"
#include "pc2wf/kdtree.hpp"
#include "pc2wf/neigh.hpp"
#include "pc2wf/nn.hpp"

namespace pc2wf {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t m = 50;           // patch size
  int det_hidden = 64;
  int loc_hidden = 256;
  int edge_hidden = 128;
  std::size_t n_s = 64;         // edge query samples
  std::size_t stride = 4;       // edge descriptor pooling window
  double loc_coord_scale = 20;  // patch-relative coordinates fed to the localiser
  bool batchnorm = true;        // hidden layers of the three heads
  double bn_momentum = 0.9;

  // edge-set thresholds (normalised units; eps is relative to point spacing)
  double eps_spacing_factor = 2.0;
  double eps1 = 0.03;
  double eps2 = 0.10;
  double eps_plus = 0.02;
  double eps_minus = 0.02;
  std::size_t n_probe = 32;

  double alpha = 10.0;
  double beta = 1.0;

  void validate() const;
  std::size_t descriptor_dim() const;
  // FNV-1a over every field that changes tensor shapes.
  std::uint64_t architecture_hash() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Encoder plus the three heads.
struct HeadBundle {
  ModelConfig config;
  Encoder encoder;
  nn::Mlp det;   // pooled patch features -> vertex logit
  nn::Mlp loc;   // flattened (feature, offset) rows -> M logits
  nn::Mlp edge;  // pooled edge descriptor -> edge logit

  static HeadBundle create(const ModelConfig& cfg, std::uint64_t seed);

  std::vector<nn::Tensor2*> parameters();
  std::vector<const nn::Tensor2*> parameters() const;
  std::vector<nn::Tensor2*> buffers();
  std::vector<nn::Tensor2> zero_grads() const;
};

void save_checkpoint(const std::filesystem::path& path, const HeadBundle& bundle);
// Throws ParseError on a malformed file or an architecture-hash mismatch.
HeadBundle load_checkpoint(const std::filesystem::path& path);

// Rows of `features` for the patch members, then column max.
Matrix pooled_patch_features(const Patch& patch, const Matrix& features);

// Localiser input row: per member, its feature row followed by the scaled
// offset from the seed (rotated by `rotation`).
Matrix localiser_input(const Patch& patch, const Matrix& features, std::span<const Vec3> points,
                       double coord_scale, const Eigen::Matrix3d& rotation = Eigen::Matrix3d::Identity());

double vertex_detect(const Patch& patch, const Matrix& features, const HeadBundle& bundle);
std::vector<double> vertex_detect(std::span<const Patch> patches, const Matrix& features,
                                  const HeadBundle& bundle);

struct Localisation {
  Vec3 vertex = Vec3::Zero();
  std::vector<double> weights;  // one per patch member, summing to 1
};
Localisation vertex_localize(const Patch& patch, const Matrix& features, std::span<const Vec3> points,
                             const HeadBundle& bundle);
std::vector<Localisation> vertex_localize(std::span<const Patch> patches, const Matrix& features,
                                          std::span<const Vec3> points, const HeadBundle& bundle);

// Nearest input point to each of the n_s equally spaced queries from a to b.
std::vector<std::size_t> edge_query_points(const Vec3& a, const Vec3& b, const KdTree& tree,
                                           std::size_t n_s);
// Flattened ((n_s / stride) x C) descriptor as a single row.
Matrix edge_descriptor(const Vec3& a, const Vec3& b, const KdTree& tree, const Matrix& features,
                       std::size_t n_s, std::size_t stride);
Matrix edge_descriptor(std::span<const std::size_t> query_points, const Matrix& features,
                       std::size_t stride);

double edge_verify(const Matrix& descriptor, const HeadBundle& bundle);
std::vector<double> edge_verify_batch(const Matrix& descriptors, const HeadBundle& bundle);

struct SurfaceTest {
  bool on_surface = false;  // every probe has an input point closer than eps
  double mean_distance = 0.0;
  double max_distance = 0.0;
};
SurfaceTest segment_on_surface(const Vec3& a, const Vec3& b, const KdTree& tree, double eps,
                               std::size_t n_probe);

}  // namespace pc2wf
