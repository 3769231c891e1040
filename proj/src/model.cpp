#include "pc2wf/model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace pc2wf {

void ModelConfig::validate() const {
  encoder.validate();
  if (m == 0) throw InvalidInput("patch size M must be positive");
  if (det_hidden <= 0 || loc_hidden <= 0 || edge_hidden <= 0) throw InvalidInput("head widths must be positive");
  if (n_s < 2) throw InvalidInput("edge descriptors need at least 2 samples");
  if (stride == 0 || stride > n_s) throw InvalidInput("edge pooling stride must be in [1, N_s]");
  if (!(eps_spacing_factor > 0) || !(eps1 > 0) || !(eps2 > 0) || !(eps_plus > 0) || !(eps_minus > 0)) {
    throw InvalidInput("edge-set thresholds must be positive");
  }
  if (eps1 > eps2) throw InvalidInput("eps1 must not exceed eps2");
  if (n_probe < 2) throw InvalidInput("surface test needs at least 2 probes");
  if (alpha < 0 || beta < 0) throw InvalidInput("loss weights must be nonnegative");
  if (!(bn_momentum >= 0 && bn_momentum < 1)) throw InvalidInput("batchnorm momentum must be in [0, 1)");
}

std::size_t ModelConfig::descriptor_dim() const {
  return (n_s + stride - 1) / stride * static_cast<std::size_t>(encoder.out_dim);
}

std::uint64_t ModelConfig::architecture_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(static_cast<std::uint64_t>(encoder.mode));
  mix(encoder.k);
  mix(static_cast<std::uint64_t>(encoder.hidden_pre));
  mix(static_cast<std::uint64_t>(encoder.hidden_post));
  mix(static_cast<std::uint64_t>(encoder.out_dim));
  mix(encoder.batchnorm);
  mix(m);
  mix(static_cast<std::uint64_t>(det_hidden));
  mix(static_cast<std::uint64_t>(loc_hidden));
  mix(static_cast<std::uint64_t>(edge_hidden));
  mix(n_s);
  mix(stride);
  mix(batchnorm);
  return h;
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["encoder"] = {{"mode", to_string(encoder.mode)},
                  {"k", encoder.k},
                  {"hidden_pre", encoder.hidden_pre},
                  {"hidden_post", encoder.hidden_post},
                  {"out_dim", encoder.out_dim},
                  {"coord_scale", encoder.coord_scale},
                  {"radius_small", encoder.radius_small},
                  {"radius_large", encoder.radius_large},
                  {"batchnorm", encoder.batchnorm}};
  j["m"] = m;
  j["det_hidden"] = det_hidden;
  j["loc_hidden"] = loc_hidden;
  j["edge_hidden"] = edge_hidden;
  j["n_s"] = n_s;
  j["stride"] = stride;
  j["loc_coord_scale"] = loc_coord_scale;
  j["batchnorm"] = batchnorm;
  j["bn_momentum"] = bn_momentum;
  j["eps_spacing_factor"] = eps_spacing_factor;
  j["eps1"] = eps1;
  j["eps2"] = eps2;
  j["eps_plus"] = eps_plus;
  j["eps_minus"] = eps_minus;
  j["n_probe"] = n_probe;
  j["alpha"] = alpha;
  j["beta"] = beta;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    auto j = nlohmann::json::parse(text);
    const auto& e = j.at("encoder");
    c.encoder.mode = encoder_mode_from_string(e.at("mode").get<std::string>());
    e.at("k").get_to(c.encoder.k);
    e.at("hidden_pre").get_to(c.encoder.hidden_pre);
    e.at("hidden_post").get_to(c.encoder.hidden_post);
    e.at("out_dim").get_to(c.encoder.out_dim);
    e.at("coord_scale").get_to(c.encoder.coord_scale);
    e.at("radius_small").get_to(c.encoder.radius_small);
    e.at("radius_large").get_to(c.encoder.radius_large);
    e.at("batchnorm").get_to(c.encoder.batchnorm);
    j.at("m").get_to(c.m);
    j.at("det_hidden").get_to(c.det_hidden);
    j.at("loc_hidden").get_to(c.loc_hidden);
    j.at("edge_hidden").get_to(c.edge_hidden);
    j.at("n_s").get_to(c.n_s);
    j.at("stride").get_to(c.stride);
    j.at("loc_coord_scale").get_to(c.loc_coord_scale);
    j.at("batchnorm").get_to(c.batchnorm);
    j.at("bn_momentum").get_to(c.bn_momentum);
    j.at("eps_spacing_factor").get_to(c.eps_spacing_factor);
    j.at("eps1").get_to(c.eps1);
    j.at("eps2").get_to(c.eps2);
    j.at("eps_plus").get_to(c.eps_plus);
    j.at("eps_minus").get_to(c.eps_minus);
    j.at("n_probe").get_to(c.n_probe);
    j.at("alpha").get_to(c.alpha);
    j.at("beta").get_to(c.beta);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("model config: ") + ex.what());
  }
  c.validate();
  return c;
}

HeadBundle HeadBundle::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  HeadBundle b;
  b.config = cfg;
  Rng rng = make_rng(seed, "model-init");
  b.encoder = Encoder(cfg.encoder, rng);
  const int c = cfg.encoder.out_dim;
  const int m = static_cast<int>(cfg.m);
  b.det = nn::Mlp({{c, cfg.det_hidden, 1}, cfg.batchnorm, false, true}, rng);
  b.loc = nn::Mlp({{(c + 3) * m, cfg.loc_hidden, m}, cfg.batchnorm, false, true}, rng);
  b.edge = nn::Mlp({{static_cast<int>(cfg.descriptor_dim()), cfg.edge_hidden, 1}, cfg.batchnorm, false, true}, rng);
  for (nn::Mlp* net : {&b.det, &b.loc, &b.edge}) net->momentum = cfg.bn_momentum;
  return b;
}

std::vector<nn::Tensor2*> HeadBundle::parameters() {
  auto out = encoder.parameters();
  for (nn::Mlp* net : {&det, &loc, &edge}) {
    auto p = net->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<const nn::Tensor2*> HeadBundle::parameters() const {
  std::vector<const nn::Tensor2*> out;
  for (auto* p : const_cast<HeadBundle*>(this)->parameters()) out.push_back(p);
  return out;
}

std::vector<nn::Tensor2*> HeadBundle::buffers() {
  auto out = encoder.buffers();
  for (nn::Mlp* net : {&det, &loc, &edge}) {
    auto p = net->buffers();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<nn::Tensor2> HeadBundle::zero_grads() const {
  std::vector<nn::Tensor2> g;
  for (const auto* p : parameters()) g.push_back(nn::Tensor2::Zero(p->rows(), p->cols()));
  return g;
}

namespace {

void check_members(const Patch& patch, const Matrix& features) {
  if (patch.members.empty()) throw InvalidInput("empty patch");
  for (auto i : patch.members) {
    if (static_cast<Eigen::Index>(i) >= features.rows()) {
      throw InvalidInput("patch member " + std::to_string(i) + " has no feature row");
    }
  }
}

}  // namespace

Matrix pooled_patch_features(const Patch& patch, const Matrix& features) {
  check_members(patch, features);
  Matrix out = features.row(static_cast<Eigen::Index>(patch.members.front()));
  for (auto i : patch.members) out = out.cwiseMax(features.row(static_cast<Eigen::Index>(i)));
  return out;
}

Matrix localiser_input(const Patch& patch, const Matrix& features, std::span<const Vec3> points,
                       double coord_scale, const Eigen::Matrix3d& rotation) {
  check_members(patch, features);
  const auto c = features.cols();
  Matrix row(1, static_cast<Eigen::Index>(patch.members.size()) * (c + 3));
  const Vec3& origin = points[patch.seed];
  Eigen::Index col = 0;
  for (auto i : patch.members) {
    row.block(0, col, 1, c) = features.row(static_cast<Eigen::Index>(i));
    Vec3 d = rotation * (points[i] - origin) * coord_scale;
    row.block<1, 3>(0, col + c) = d.transpose();
    col += c + 3;
  }
  return row;
}

std::vector<double> vertex_detect(std::span<const Patch> patches, const Matrix& features,
                                  const HeadBundle& bundle) {
  if (patches.empty()) return {};
  Matrix x(static_cast<Eigen::Index>(patches.size()), features.cols());
  for (std::size_t p = 0; p < patches.size(); ++p) {
    x.row(static_cast<Eigen::Index>(p)) = pooled_patch_features(patches[p], features);
  }
  Matrix prob = nn::sigmoid(bundle.det.forward(x, nn::Mode::Eval));
  return {prob.data(), prob.data() + prob.size()};
}

double vertex_detect(const Patch& patch, const Matrix& features, const HeadBundle& bundle) {
  return vertex_detect(std::span<const Patch>(&patch, 1), features, bundle).front();
}

std::vector<Localisation> vertex_localize(std::span<const Patch> patches, const Matrix& features,
                                          std::span<const Vec3> points, const HeadBundle& bundle) {
  if (patches.empty()) return {};
  const std::size_t m = bundle.config.m;
  Matrix x(static_cast<Eigen::Index>(patches.size()), bundle.loc.in_dim());
  for (std::size_t p = 0; p < patches.size(); ++p) {
    if (patches[p].members.size() != m) {
      throw InvalidInput("localiser expects patches of " + std::to_string(m) + " points, got " +
                         std::to_string(patches[p].members.size()));
    }
    x.row(static_cast<Eigen::Index>(p)) =
        localiser_input(patches[p], features, points, bundle.config.loc_coord_scale);
  }
  Matrix w = nn::softmax_rows(bundle.loc.forward(x, nn::Mode::Eval));
  std::vector<Localisation> out(patches.size());
  for (std::size_t p = 0; p < patches.size(); ++p) {
    auto& loc = out[p];
    loc.weights.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      double wi = w(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i));
      loc.weights[i] = wi;
      loc.vertex += wi * points[patches[p].members[i]];
    }
  }
  return out;
}

Localisation vertex_localize(const Patch& patch, const Matrix& features, std::span<const Vec3> points,
                             const HeadBundle& bundle) {
  return vertex_localize(std::span<const Patch>(&patch, 1), features, points, bundle).front();
}

std::vector<std::size_t> edge_query_points(const Vec3& a, const Vec3& b, const KdTree& tree,
                                           std::size_t n_s) {
  if (tree.size() == 0) throw InvalidInput("edge descriptor on an empty cloud");
  if (n_s < 2) throw InvalidInput("edge descriptors need at least 2 samples");
  std::vector<std::size_t> out(n_s);
  for (std::size_t k = 0; k < n_s; ++k) {
    double t = static_cast<double>(k) / static_cast<double>(n_s - 1);
    Vec3 q = k + 1 == n_s ? b : Vec3(a + t * (b - a));
    out[k] = tree.nearest(q).index;
  }
  return out;
}

Matrix edge_descriptor(std::span<const std::size_t> query_points, const Matrix& features,
                       std::size_t stride) {
  Matrix rows(static_cast<Eigen::Index>(query_points.size()), features.cols());
  for (std::size_t k = 0; k < query_points.size(); ++k) {
    rows.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(query_points[k]));
  }
  Matrix pooled = nn::maxpool_cols(rows, static_cast<Eigen::Index>(stride)).out;
  return Eigen::Map<const Matrix>(pooled.data(), 1, pooled.size());
}

Matrix edge_descriptor(const Vec3& a, const Vec3& b, const KdTree& tree, const Matrix& features,
                       std::size_t n_s, std::size_t stride) {
  if ((a - b).norm() == 0.0) throw InvalidInput("edge descriptor of a zero-length segment");
  return edge_descriptor(edge_query_points(a, b, tree, n_s), features, stride);
}

std::vector<double> edge_verify_batch(const Matrix& descriptors, const HeadBundle& bundle) {
  if (descriptors.rows() == 0) return {};
  if (descriptors.cols() != bundle.edge.in_dim()) {
    throw InvalidInput("edge descriptor has " + std::to_string(descriptors.cols()) +
                       " entries, the edge head expects " + std::to_string(bundle.edge.in_dim()));
  }
  Matrix prob = nn::sigmoid(bundle.edge.forward(descriptors, nn::Mode::Eval));
  return {prob.data(), prob.data() + prob.size()};
}

double edge_verify(const Matrix& descriptor, const HeadBundle& bundle) {
  return edge_verify_batch(descriptor, bundle).front();
}

SurfaceTest segment_on_surface(const Vec3& a, const Vec3& b, const KdTree& tree, double eps,
                               std::size_t n_probe) {
  if (tree.size() == 0) throw InvalidInput("surface test on an empty cloud");
  if (n_probe < 2) throw InvalidInput("surface test needs at least 2 probes");
  SurfaceTest out;
  out.on_surface = true;
  for (std::size_t k = 0; k < n_probe; ++k) {
    double t = static_cast<double>(k) / static_cast<double>(n_probe - 1);
    Vec3 q = a + t * (b - a);
    double d = tree.nearest(q).distance;
    out.mean_distance += d;
    out.max_distance = std::max(out.max_distance, d);
    if (!(d < eps)) out.on_surface = false;
  }
  out.mean_distance /= static_cast<double>(n_probe);
  return out;
}

}  // namespace pc2wf
