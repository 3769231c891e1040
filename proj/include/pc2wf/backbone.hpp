#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pc2wf/neigh.hpp"
#include "pc2wf/nn.hpp"

namespace pc2wf {

enum class EncoderMode { Learned, Handcrafted };

std::string to_string(EncoderMode mode);
EncoderMode encoder_mode_from_string(const std::string& name);

struct EncoderConfig {
  EncoderMode mode = EncoderMode::Learned;
  std::size_t k = 16;          // neighbours per point
  int hidden_pre = 64;         // shared per-neighbour layer, before pooling
  int hidden_post = 64;        // after pooling
  int out_dim = 32;
  double coord_scale = 20.0;   // relative offsets are multiplied by this before the MLP
  double radius_small = 0.03;  // handcrafted mode scales
  double radius_large = 0.06;
  bool batchnorm = false;

  void validate() const;
};

// Everything the encoder needs about a cloud that does not depend on the
// network weights: padded neighbour lists, relative offsets and covariance
// spectra. Built once per cloud.
struct PointContext {
  std::size_t k = 0;
  std::vector<std::size_t> neighbors;  // N*k, row i holds point i's neighbours
  Matrix offsets;                      // (N*k) x 4: dx, dy, dz, |d|
  Matrix spectrum;                     // N x 3: eigenvalues, descending, summing to 1
  Matrix handcrafted;                  // N x out_dim, handcrafted mode only

  std::size_t size() const { return static_cast<std::size_t>(spectrum.rows()); }
};

PointContext make_point_context(const CloudIndex& index, const EncoderConfig& cfg);

// Descending eigenvalues of the covariance of `pts`, normalised to sum 1
// (zeros for a degenerate set).
Eigen::Vector3d covariance_spectrum(std::span<const Vec3> pts);

class Encoder {
 public:
  struct Cache {
    std::vector<std::size_t> subset;
    Matrix x;                   // (rows*k) x 4 scaled, rotated neighbour offsets
    Matrix pooled;              // rows x hidden_pre, after ReLU
    std::vector<int> argmax;    // winning neighbour slot per pooled entry
    nn::Mlp::Cache post;
  };

  Encoder() = default;
  Encoder(const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }
  int out_dim() const { return cfg_.out_dim; }

  // Features for every point, evaluation mode.
  Matrix encode(const PointContext& ctx, int threads = 1) const;

  // Features for the listed points with the neighbour offsets rotated by
  // `rotation` (training augmentation). Rows follow `subset`.
  Matrix forward(const PointContext& ctx, std::span<const std::size_t> subset,
                 const Eigen::Matrix3d& rotation, nn::Mode mode, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Matrix& dfeatures, std::vector<nn::Tensor2>& grads) const;
  void update_running_stats(const Cache& cache);

  std::vector<nn::Tensor2*> parameters();
  std::vector<const nn::Tensor2*> parameters() const;
  std::vector<nn::Tensor2*> buffers();
  std::vector<nn::Tensor2> zero_grads() const;

 private:
  // Shared per-neighbour layer fused with the max over neighbours, so the
  // (rows*k) x hidden activation is never stored.
  Matrix pool_neighbors(const Matrix& x, Eigen::Index rows, std::vector<int>* argmax) const;

  EncoderConfig cfg_;
  nn::Mlp pre_, post_;
};

}  // namespace pc2wf
