#pragma once

#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "pc2wf/core.hpp"
#include "pc2wf/rng.hpp"

namespace pc2wf::nn {

using Tensor2 = Matrix;

enum class Mode { Train, Eval };

// Throws InvalidInput if any entry is NaN or infinite.
void check_finite(const Tensor2& t, std::string_view where);

struct MlpSpec {
  std::vector<int> widths;  // input width followed by every layer's output width
  bool batchnorm = false;   // on hidden layers
  bool relu_last = false;
  bool zero_last = false;   // zero-initialise the final layer
};

struct DenseLayer {
  Tensor2 weight;  // in x out
  Tensor2 bias;    // 1 x out
  bool relu = false;
  bool batchnorm = false;
  Tensor2 gamma, beta;                 // 1 x out
  Tensor2 running_mean, running_var;   // 1 x out
};

// affine -> (batchnorm) -> (ReLU) chain.
class Mlp {
 public:
  struct LayerCache {
    Tensor2 input;
    Tensor2 xhat;       // normalised pre-activation (batchnorm only)
    Tensor2 inv_std;    // 1 x out (batchnorm only)
    Tensor2 batch_mean, batch_var;
    Tensor2 output;     // post-activation
  };
  struct Cache {
    Mode mode = Mode::Eval;
    std::vector<LayerCache> layers;
  };

  Mlp() = default;
  Mlp(const MlpSpec& spec, Rng& rng);

  int in_dim() const;
  int out_dim() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  // Pure: running statistics are only changed by update_running_stats.
  Tensor2 forward(const Tensor2& x, Mode mode, Cache* cache = nullptr) const;
  void update_running_stats(const Cache& cache);
  // Accumulates parameter gradients into `grads` (aligned with parameters()).
  Tensor2 backward(const Cache& cache, const Tensor2& dy, std::vector<Tensor2>& grads) const;

  std::vector<Tensor2*> parameters();
  std::vector<const Tensor2*> parameters() const;
  std::vector<Tensor2*> buffers();
  std::vector<const Tensor2*> buffers() const;
  std::vector<Tensor2> zero_grads() const;

  double momentum = 0.9;
  double bn_eps = 1e-5;

 private:
  std::vector<DenseLayer> layers_;
};

// Column-wise max over consecutive groups of `group` rows. A short final
// group behaves as if padded with -infinity.
struct MaxPool {
  Tensor2 out;
  std::vector<Eigen::Index> argmax;  // source row for every output entry, row-major
  Eigen::Index in_rows = 0;
};
MaxPool maxpool_cols(const Tensor2& x, Eigen::Index group);
Tensor2 maxpool_backward(const MaxPool& pool, const Tensor2& dy);

Tensor2 sigmoid(const Tensor2& z);
// Gradient w.r.t. z given p = sigmoid(z) and dL/dp.
Tensor2 sigmoid_backward(const Tensor2& p, const Tensor2& dp);

Tensor2 softmax_rows(const Tensor2& z);
Tensor2 softmax_rows_backward(const Tensor2& w, const Tensor2& dw);

struct Loss {
  double value = 0.0;
  std::vector<double> grad;  // dL/dp per sample
  bool fallback = false;     // balanced BCE degenerated to plain BCE
};

inline constexpr double kProbClamp = 1e-7;

// Mean binary cross-entropy over the batch; probabilities clamped to
// [1e-7, 1 - 1e-7] before the log.
Loss bce(std::span<const double> p, std::span<const double> y);
// Half the mean loss over positives plus half the mean over negatives.
// Single-class batches fall back to plain BCE and set `fallback`.
Loss balanced_bce(std::span<const double> p, std::span<const double> y);

struct VectorLoss {
  double value = 0.0;
  std::vector<Vec3> grad;
};
// (1/P) * sum ||v_i - gt_i||^2
VectorLoss mse(std::span<const Vec3> v, std::span<const Vec3> gt);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor2> m, v;
  long step = 0;
};

AdamState make_adam_state(std::span<Tensor2* const> params);
void adam_step(std::span<Tensor2* const> params, std::span<const Tensor2> grads, AdamState& state,
               const AdamConfig& cfg);

void write_tensor(std::ostream& out, const Tensor2& t);
Tensor2 read_tensor(std::istream& in);

}  // namespace pc2wf::nn
