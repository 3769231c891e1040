#include "pc2wf/backbone.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "pc2wf/parallel.hpp"

namespace pc2wf {

std::string to_string(EncoderMode mode) {
  return mode == EncoderMode::Learned ? "learned" : "handcrafted";
}

EncoderMode encoder_mode_from_string(const std::string& name) {
  if (name == "learned") return EncoderMode::Learned;
  if (name == "handcrafted") return EncoderMode::Handcrafted;
  throw InvalidInput("unknown encoder mode '" + name + "' (expected learned or handcrafted)");
}

void EncoderConfig::validate() const {
  if (k < 4) throw InvalidInput("encoder needs at least 4 neighbours");
  if (hidden_pre <= 0 || hidden_post <= 0 || out_dim <= 0) {
    throw InvalidInput("encoder widths must be positive");
  }
  if (mode == EncoderMode::Handcrafted && out_dim < 6) {
    throw InvalidInput("handcrafted features need out_dim >= 6");
  }
  if (!(coord_scale > 0) || !(radius_small > 0) || !(radius_large > 0)) {
    throw InvalidInput("encoder scales must be positive");
  }
}

Eigen::Vector3d covariance_spectrum(std::span<const Vec3> pts) {
  if (pts.size() < 2) return Eigen::Vector3d::Zero();
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov, Eigen::EigenvaluesOnly);
  Eigen::Vector3d ev = solver.eigenvalues().reverse().cwiseMax(0.0);
  double sum = ev.sum();
  if (!(sum > 0)) return Eigen::Vector3d::Zero();
  return ev / sum;
}

namespace {

// linearity, planarity, sphericity of a normalised spectrum
Eigen::Vector3d shape_features(const Eigen::Vector3d& ev) {
  if (!(ev[0] > 0)) return Eigen::Vector3d::Zero();
  return {(ev[0] - ev[1]) / ev[0], (ev[1] - ev[2]) / ev[0], ev[2] / ev[0]};
}

Eigen::Vector3d radius_features(const CloudIndex& index, std::size_t i, double r) {
  auto ids = index.tree().radius(index.points()[i], r);
  if (ids.size() < 3) return Eigen::Vector3d::Zero();
  std::sort(ids.begin(), ids.end());
  std::vector<Vec3> pts;
  pts.reserve(ids.size());
  for (auto j : ids) pts.push_back(index.points()[j]);
  return shape_features(covariance_spectrum(pts));
}

}  // namespace

PointContext make_point_context(const CloudIndex& index, const EncoderConfig& cfg) {
  cfg.validate();
  const std::size_t n = index.size();
  const auto pts = index.points();
  PointContext ctx;
  ctx.k = cfg.k;
  ctx.neighbors.resize(n * cfg.k);
  ctx.offsets.resize(static_cast<Eigen::Index>(n * cfg.k), 4);
  ctx.spectrum.resize(static_cast<Eigen::Index>(n), 3);
  std::vector<Vec3> local;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nn = index.neighbors()[i];
    local.assign({pts[i]});
    for (std::size_t j = 0; j < cfg.k; ++j) {
      // Short lists are padded by repeating the nearest neighbour.
      std::size_t id = nn.empty() ? i : nn[j < nn.size() ? j : 0].index;
      ctx.neighbors[i * cfg.k + j] = id;
      Vec3 d = pts[id] - pts[i];
      auto row = static_cast<Eigen::Index>(i * cfg.k + j);
      ctx.offsets(row, 0) = d.x();
      ctx.offsets(row, 1) = d.y();
      ctx.offsets(row, 2) = d.z();
      ctx.offsets(row, 3) = d.norm();
      if (j < nn.size()) local.push_back(pts[id]);
    }
    ctx.spectrum.row(static_cast<Eigen::Index>(i)) = covariance_spectrum(local).transpose();
  }
  if (cfg.mode == EncoderMode::Handcrafted) {
    ctx.handcrafted = Matrix::Zero(static_cast<Eigen::Index>(n), cfg.out_dim);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = static_cast<Eigen::Index>(i);
      ctx.handcrafted.block<1, 3>(row, 0) = radius_features(index, i, cfg.radius_small).transpose();
      ctx.handcrafted.block<1, 3>(row, 3) = radius_features(index, i, cfg.radius_large).transpose();
    }
  }
  return ctx;
}

Encoder::Encoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  if (cfg.mode == EncoderMode::Handcrafted) return;
  pre_ = nn::Mlp({{4, cfg.hidden_pre}, false, true, false}, rng);
  post_ = nn::Mlp({{cfg.hidden_pre + 3, cfg.hidden_post, cfg.out_dim}, cfg.batchnorm, false, false}, rng);
}

Matrix Encoder::forward(const PointContext& ctx, std::span<const std::size_t> subset,
                        const Eigen::Matrix3d& rotation, nn::Mode mode, Cache* cache) const {
  if (ctx.k != cfg_.k) throw InvalidInput("point context was built for a different neighbour count");
  const auto rows = static_cast<Eigen::Index>(subset.size());
  if (cfg_.mode == EncoderMode::Handcrafted) {
    if (ctx.handcrafted.cols() != cfg_.out_dim) throw InvalidInput("point context lacks handcrafted features");
    Matrix out(rows, cfg_.out_dim);
    for (Eigen::Index r = 0; r < rows; ++r) out.row(r) = ctx.handcrafted.row(static_cast<Eigen::Index>(subset[r]));
    if (cache) cache->subset.assign(subset.begin(), subset.end());
    return out;
  }
  const auto k = static_cast<Eigen::Index>(cfg_.k);
  Matrix x(rows * k, 4);
  const Eigen::Matrix3d rt = rotation.transpose() * cfg_.coord_scale;
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto src = static_cast<Eigen::Index>(subset[r]) * k;
    x.block(r * k, 0, k, 3).noalias() = ctx.offsets.block(src, 0, k, 3) * rt;
    x.block(r * k, 3, k, 1) = ctx.offsets.block(src, 3, k, 1) * cfg_.coord_scale;
  }
  std::vector<int> argmax;
  Matrix pooled = pool_neighbors(x, rows, cache ? &argmax : nullptr);
  Matrix joined(rows, cfg_.hidden_pre + 3);
  joined.leftCols(cfg_.hidden_pre) = pooled;
  for (Eigen::Index r = 0; r < rows; ++r) {
    joined.block<1, 3>(r, cfg_.hidden_pre) = ctx.spectrum.row(static_cast<Eigen::Index>(subset[r]));
  }
  Matrix out = post_.forward(joined, mode, cache ? &cache->post : nullptr);
  if (cache) {
    cache->subset.assign(subset.begin(), subset.end());
    cache->x = std::move(x);
    cache->pooled = std::move(pooled);
    cache->argmax = std::move(argmax);
  }
  return out;
}

Matrix Encoder::pool_neighbors(const Matrix& x, Eigen::Index rows, std::vector<int>* argmax) const {
  const auto& layer = pre_.layers().front();
  const auto k = static_cast<Eigen::Index>(cfg_.k);
  const Eigen::Index h = cfg_.hidden_pre;
  Matrix pooled(rows, h);
  if (argmax) argmax->assign(static_cast<std::size_t>(rows * h), 0);
  Matrix z(k, h);
  for (Eigen::Index r = 0; r < rows; ++r) {
    z.noalias() = x.middleRows(r * k, k) * layer.weight;
    for (Eigen::Index c = 0; c < h; ++c) {
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < k; ++j) {
        if (z(j, c) > z(best, c)) best = j;
      }
      // max and ReLU commute, so pooling before the activation is exact
      pooled(r, c) = std::max(0.0, z(best, c) + layer.bias(0, c));
      if (argmax) (*argmax)[static_cast<std::size_t>(r * h + c)] = static_cast<int>(best);
    }
  }
  nn::check_finite(pooled, "encoder pooling");
  return pooled;
}

Matrix Encoder::encode(const PointContext& ctx, int threads) const {
  const std::size_t n = ctx.size();
  Matrix out(static_cast<Eigen::Index>(n), cfg_.out_dim);
  constexpr std::size_t chunk = 2048;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    std::vector<std::size_t> ids;
    for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) ids.push_back(i);
    Matrix f = forward(ctx, ids, Eigen::Matrix3d::Identity(), nn::Mode::Eval);
    out.middleRows(static_cast<Eigen::Index>(c * chunk), f.rows()) = f;
  });
  return out;
}

void Encoder::backward(const Cache& cache, const Matrix& dfeatures, std::vector<nn::Tensor2>& grads) const {
  if (cfg_.mode == EncoderMode::Handcrafted) return;
  if (grads.size() != pre_.parameters().size() + post_.parameters().size()) grads = zero_grads();
  const std::size_t split = pre_.parameters().size();
  std::vector<nn::Tensor2> gpre(std::make_move_iterator(grads.begin()),
                                std::make_move_iterator(grads.begin() + static_cast<long>(split)));
  std::vector<nn::Tensor2> gpost(std::make_move_iterator(grads.begin() + static_cast<long>(split)),
                                 std::make_move_iterator(grads.end()));
  Matrix djoined = post_.backward(cache.post, dfeatures, gpost);
  // Gradient of the fused per-neighbour layer: only winning rows contribute.
  const auto k = static_cast<Eigen::Index>(cfg_.k);
  const Eigen::Index h = cfg_.hidden_pre;
  nn::Tensor2& dW = gpre[0];
  nn::Tensor2& db = gpre[1];
  for (Eigen::Index r = 0; r < cache.pooled.rows(); ++r) {
    for (Eigen::Index c = 0; c < h; ++c) {
      if (!(cache.pooled(r, c) > 0.0)) continue;
      double d = djoined(r, c);
      Eigen::Index row = r * k + cache.argmax[static_cast<std::size_t>(r * h + c)];
      dW.col(c) += d * cache.x.row(row).transpose();
      db(0, c) += d;
    }
  }
  for (std::size_t i = 0; i < split; ++i) grads[i] = std::move(gpre[i]);
  for (std::size_t i = 0; i < gpost.size(); ++i) grads[split + i] = std::move(gpost[i]);
}

void Encoder::update_running_stats(const Cache& cache) {
  if (cfg_.mode == EncoderMode::Handcrafted) return;
  post_.update_running_stats(cache.post);
}

std::vector<nn::Tensor2*> Encoder::parameters() {
  auto a = pre_.parameters();
  auto b = post_.parameters();
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<const nn::Tensor2*> Encoder::parameters() const {
  auto a = pre_.parameters();
  auto b = post_.parameters();
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<nn::Tensor2*> Encoder::buffers() {
  auto a = pre_.buffers();
  auto b = post_.buffers();
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<nn::Tensor2> Encoder::zero_grads() const {
  auto a = pre_.zero_grads();
  auto b = post_.zero_grads();
  a.insert(a.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
  return a;
}

}  // namespace pc2wf
