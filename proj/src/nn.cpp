#include "pc2wf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

namespace pc2wf::nn {

void check_finite(const Tensor2& t, std::string_view where) {
  if (!t.allFinite()) throw InvalidInput("non-finite values in " + std::string(where));
}

Mlp::Mlp(const MlpSpec& spec, Rng& rng) {
  if (spec.widths.size() < 2) throw InvalidInput("an MLP needs input and output widths");
  const std::size_t n = spec.widths.size() - 1;
  for (std::size_t l = 0; l < n; ++l) {
    const int in = spec.widths[l], out = spec.widths[l + 1];
    if (in <= 0 || out <= 0) throw InvalidInput("MLP widths must be positive");
    const bool last = l + 1 == n;
    DenseLayer layer;
    layer.relu = !last || spec.relu_last;
    layer.batchnorm = spec.batchnorm && !last;
    layer.weight = Tensor2::Zero(in, out);
    layer.bias = Tensor2::Zero(1, out);
    if (!(last && spec.zero_last)) {
      // He initialisation.
      std::normal_distribution<double> g(0.0, std::sqrt(2.0 / in));
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = g(rng);
    }
    if (layer.batchnorm) {
      layer.gamma = Tensor2::Ones(1, out);
      layer.beta = Tensor2::Zero(1, out);
      layer.running_mean = Tensor2::Zero(1, out);
      layer.running_var = Tensor2::Ones(1, out);
    }
    layers_.push_back(std::move(layer));
  }
}

int Mlp::in_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.rows()); }
int Mlp::out_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.cols()); }

Tensor2 Mlp::forward(const Tensor2& x, Mode mode, Cache* cache) const {
  if (x.cols() != in_dim()) {
    throw InvalidInput("MLP input has " + std::to_string(x.cols()) + " columns, expected " +
                       std::to_string(in_dim()));
  }
  if (cache) {
    cache->mode = mode;
    cache->layers.assign(layers_.size(), {});
  }
  Tensor2 h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& L = layers_[l];
    Tensor2 z = h * L.weight;
    z.rowwise() += L.bias.row(0);
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->input = h;
    if (L.batchnorm) {
      Tensor2 mean, var;
      if (mode == Mode::Train) {
        mean = z.colwise().mean();
        var = (z.rowwise() - mean.row(0)).array().square().colwise().mean();
      } else {
        mean = L.running_mean;
        var = L.running_var;
      }
      Tensor2 inv_std = (var.array() + bn_eps).rsqrt();
      Tensor2 xhat = (z.rowwise() - mean.row(0)).array().rowwise() * inv_std.row(0).array();
      z = (xhat.array().rowwise() * L.gamma.row(0).array()).matrix();
      z.rowwise() += L.beta.row(0);
      if (lc) {
        lc->xhat = std::move(xhat);
        lc->inv_std = std::move(inv_std);
        lc->batch_mean = std::move(mean);
        lc->batch_var = std::move(var);
      }
    }
    if (L.relu) z = z.cwiseMax(0.0);
    if (lc) lc->output = z;
    h = std::move(z);
  }
  check_finite(h, "MLP output");
  return h;
}

void Mlp::update_running_stats(const Cache& cache) {
  if (cache.mode != Mode::Train) return;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    DenseLayer& L = layers_[l];
    if (!L.batchnorm) continue;
    const LayerCache& lc = cache.layers[l];
    L.running_mean = momentum * L.running_mean + (1.0 - momentum) * lc.batch_mean;
    L.running_var = momentum * L.running_var + (1.0 - momentum) * lc.batch_var;
  }
}

Tensor2 Mlp::backward(const Cache& cache, const Tensor2& dy, std::vector<Tensor2>& grads) const {
  if (cache.layers.size() != layers_.size()) throw InvalidInput("MLP cache does not match network");
  if (dy.cols() != out_dim() || dy.rows() != cache.layers.back().output.rows()) {
    throw InvalidInput("MLP output gradient has the wrong shape");
  }
  if (grads.size() != parameters().size()) grads = zero_grads();
  Tensor2 d = dy;
  std::size_t slot = grads.size();
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const DenseLayer& L = layers_[l];
    const LayerCache& lc = cache.layers[l];
    const std::size_t nparams = L.batchnorm ? 4 : 2;
    slot -= nparams;
    if (L.relu) d = (lc.output.array() > 0.0).select(d, 0.0);
    if (L.batchnorm) {
      Tensor2& dgamma = grads[slot + 2];
      Tensor2& dbeta = grads[slot + 3];
      dgamma += (d.array() * lc.xhat.array()).colwise().sum().matrix();
      dbeta += d.colwise().sum();
      Tensor2 dxhat = d.array().rowwise() * L.gamma.row(0).array();
      if (cache.mode == Mode::Train) {
        const double n = static_cast<double>(d.rows());
        Tensor2 sum_dxhat = dxhat.colwise().sum();
        Tensor2 sum_dxhat_xhat = (dxhat.array() * lc.xhat.array()).colwise().sum();
        Tensor2 t = (n * dxhat.array()).matrix();
        t.rowwise() -= sum_dxhat.row(0);
        t -= (lc.xhat.array().rowwise() * sum_dxhat_xhat.row(0).array()).matrix();
        d = (t.array().rowwise() * (lc.inv_std.row(0).array() / n)).matrix();
      } else {
        d = dxhat.array().rowwise() * lc.inv_std.row(0).array();
      }
    }
    grads[slot] += lc.input.transpose() * d;
    grads[slot + 1] += d.colwise().sum();
    d = d * L.weight.transpose();
  }
  return d;
}

std::vector<Tensor2*> Mlp::parameters() {
  std::vector<Tensor2*> out;
  for (auto& L : layers_) {
    out.push_back(&L.weight);
    out.push_back(&L.bias);
    if (L.batchnorm) {
      out.push_back(&L.gamma);
      out.push_back(&L.beta);
    }
  }
  return out;
}

std::vector<const Tensor2*> Mlp::parameters() const {
  std::vector<const Tensor2*> out;
  for (const auto& p : const_cast<Mlp*>(this)->parameters()) out.push_back(p);
  return out;
}

std::vector<Tensor2*> Mlp::buffers() {
  std::vector<Tensor2*> out;
  for (auto& L : layers_) {
    if (L.batchnorm) {
      out.push_back(&L.running_mean);
      out.push_back(&L.running_var);
    }
  }
  return out;
}

std::vector<const Tensor2*> Mlp::buffers() const {
  std::vector<const Tensor2*> out;
  for (const auto& p : const_cast<Mlp*>(this)->buffers()) out.push_back(p);
  return out;
}

std::vector<Tensor2> Mlp::zero_grads() const {
  std::vector<Tensor2> g;
  for (const auto* p : parameters()) g.push_back(Tensor2::Zero(p->rows(), p->cols()));
  return g;
}

MaxPool maxpool_cols(const Tensor2& x, Eigen::Index group) {
  if (x.rows() == 0 || x.cols() == 0) throw InvalidInput("max-pool of an empty tensor");
  if (group <= 0) throw InvalidInput("max-pool group must be positive");
  MaxPool pool;
  pool.in_rows = x.rows();
  const Eigen::Index out_rows = (x.rows() + group - 1) / group;
  pool.out.resize(out_rows, x.cols());
  pool.argmax.resize(static_cast<std::size_t>(out_rows * x.cols()));
  for (Eigen::Index g = 0; g < out_rows; ++g) {
    const Eigen::Index r0 = g * group, r1 = std::min(x.rows(), r0 + group);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::Index best = r0;
      for (Eigen::Index r = r0 + 1; r < r1; ++r) {
        if (x(r, c) > x(best, c)) best = r;
      }
      pool.out(g, c) = x(best, c);
      pool.argmax[static_cast<std::size_t>(g * x.cols() + c)] = best;
    }
  }
  return pool;
}

Tensor2 maxpool_backward(const MaxPool& pool, const Tensor2& dy) {
  if (dy.rows() != pool.out.rows() || dy.cols() != pool.out.cols()) {
    throw InvalidInput("max-pool gradient has the wrong shape");
  }
  Tensor2 dx = Tensor2::Zero(pool.in_rows, pool.out.cols());
  for (Eigen::Index g = 0; g < dy.rows(); ++g) {
    for (Eigen::Index c = 0; c < dy.cols(); ++c) {
      dx(pool.argmax[static_cast<std::size_t>(g * dy.cols() + c)], c) += dy(g, c);
    }
  }
  return dx;
}

Tensor2 sigmoid(const Tensor2& z) {
  return z.unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
}

Tensor2 sigmoid_backward(const Tensor2& p, const Tensor2& dp) {
  return (dp.array() * p.array() * (1.0 - p.array())).matrix();
}

Tensor2 softmax_rows(const Tensor2& z) {
  Tensor2 w = z.colwise() - z.rowwise().maxCoeff();
  w = w.array().exp();
  w.array().colwise() /= w.rowwise().sum().array();
  return w;
}

Tensor2 softmax_rows_backward(const Tensor2& w, const Tensor2& dw) {
  Eigen::VectorXd dot = (w.array() * dw.array()).rowwise().sum();
  return (w.array() * (dw.colwise() - dot).array()).matrix();
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

void check_batch(std::span<const double> p, std::span<const double> y) {
  if (p.empty()) throw InvalidInput("loss over an empty batch");
  if (p.size() != y.size()) throw InvalidInput("prediction and label counts differ");
}

}  // namespace

Loss bce(std::span<const double> p, std::span<const double> y) {
  check_batch(p, y);
  Loss out;
  out.grad.resize(p.size());
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    double q = clamp_prob(p[i]);
    out.value -= (y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q)) / n;
    out.grad[i] = -(y[i] / q - (1.0 - y[i]) / (1.0 - q)) / n;
  }
  return out;
}

Loss balanced_bce(std::span<const double> p, std::span<const double> y) {
  check_batch(p, y);
  std::size_t pos = 0;
  for (double v : y) pos += v > 0.5 ? 1 : 0;
  const std::size_t neg = y.size() - pos;
  if (pos == 0 || neg == 0) {
    Loss out = bce(p, y);
    out.fallback = true;
    return out;
  }
  Loss out;
  out.grad.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    double q = clamp_prob(p[i]);
    bool positive = y[i] > 0.5;
    double w = 0.5 / static_cast<double>(positive ? pos : neg);
    out.value -= w * (y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q));
    out.grad[i] = -w * (y[i] / q - (1.0 - y[i]) / (1.0 - q));
  }
  return out;
}

VectorLoss mse(std::span<const Vec3> v, std::span<const Vec3> gt) {
  if (v.empty()) throw InvalidInput("loss over an empty batch");
  if (v.size() != gt.size()) throw InvalidInput("prediction and target counts differ");
  VectorLoss out;
  out.grad.resize(v.size());
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    Vec3 d = v[i] - gt[i];
    out.value += d.squaredNorm() / n;
    out.grad[i] = 2.0 * d / n;
  }
  return out;
}

AdamState make_adam_state(std::span<Tensor2* const> params) {
  AdamState s;
  for (const auto* p : params) {
    s.m.push_back(Tensor2::Zero(p->rows(), p->cols()));
    s.v.push_back(Tensor2::Zero(p->rows(), p->cols()));
  }
  return s;
}

void adam_step(std::span<Tensor2* const> params, std::span<const Tensor2> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw InvalidInput("Adam: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols() ||
        state.m[i].rows() != grads[i].rows() || state.m[i].cols() != grads[i].cols()) {
      throw InvalidInput("Adam: shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i].cwiseProduct(grads[i]);
    params[i]->array() -=
        cfg.lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + cfg.eps);
  }
}

void write_tensor(std::ostream& out, const Tensor2& t) {
  std::uint64_t dims[2] = {static_cast<std::uint64_t>(t.rows()), static_cast<std::uint64_t>(t.cols())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())));
}

Tensor2 read_tensor(std::istream& in) {
  std::uint64_t dims[2];
  if (!in.read(reinterpret_cast<char*>(dims), sizeof(dims))) throw ParseError("truncated tensor header");
  if (dims[0] > (1u << 24) || dims[1] > (1u << 24)) throw ParseError("implausible tensor shape");
  Tensor2 t(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  if (!in.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())))) {
    throw ParseError("truncated tensor data");
  }
  return t;
}

}  // namespace pc2wf::nn
