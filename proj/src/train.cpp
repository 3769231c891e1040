#include "pc2wf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <Eigen/Geometry>

#include "pc2wf/io.hpp"
#include "pc2wf/metrics.hpp"

namespace pc2wf {

unsigned parse_edge_set_list(const std::string& text) {
  unsigned mask = 0;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
               item.end());
    if (item.empty()) continue;
    if (item == "gt+") mask |= edge_set::kGtPos;
    else if (item == "gt-") mask |= edge_set::kGtNeg;
    else if (item == "pred+") mask |= edge_set::kPredPos;
    else if (item == "pred-") mask |= edge_set::kPredNeg;
    else throw InvalidInput("unknown edge set '" + item + "' (expected gt+, gt-, pred+ or pred-)");
  }
  return mask;
}

std::string edge_set_list(unsigned mask) {
  std::string out;
  const std::pair<unsigned, const char*> names[] = {{edge_set::kGtPos, "gt+"},
                                                    {edge_set::kGtNeg, "gt-"},
                                                    {edge_set::kPredPos, "pred+"},
                                                    {edge_set::kPredNeg, "pred-"}};
  for (const auto& [bit, name] : names) {
    if (mask & bit) out += (out.empty() ? "" : ",") + std::string(name);
  }
  return out;
}

void TrainConfig::validate() const {
  model.validate();
  infer.validate();
  if (epochs == 0) throw InvalidInput("training needs at least one epoch");
  if (patches_per_step < 2) throw InvalidInput("need at least 2 patches per step");
  if (edges_per_step < 2) throw InvalidInput("need at least 2 edge samples per step");
  if ((edge_sets & edge_set::kAll) == 0) throw InvalidInput("at least one edge set must be enabled");
  if (!(adam.lr > 0)) throw InvalidInput("learning rate must be positive");
}

TrainingObject prepare_object(std::string name, const PointCloud& cloud, const Wireframe& gt,
                              const EncoderConfig& encoder) {
  auto [normalized, transform] = normalize(cloud);
  Wireframe ngt = transform_wireframe(gt, transform);
  CloudIndex index(std::move(normalized), 8, std::max<std::size_t>(16, encoder.k));
  PointContext ctx = make_point_context(index, encoder);
  return TrainingObject{std::move(name), std::move(index), std::move(ngt), std::move(ctx)};
}

std::vector<TrainingObject> load_objects(const std::filesystem::path& dir, const EncoderConfig& encoder) {
  if (!std::filesystem::is_directory(dir)) throw Error("no such directory: " + dir.string());
  std::vector<std::filesystem::path> clouds;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".xyz") clouds.push_back(entry.path());
  }
  std::sort(clouds.begin(), clouds.end());
  std::vector<TrainingObject> out;
  for (const auto& path : clouds) {
    auto stem = path.stem().string();
    auto wf = dir / (stem + ".wf.json");
    if (!std::filesystem::exists(wf)) throw Error("missing ground truth " + wf.string());
    out.push_back(prepare_object(stem, read_cloud(path), read_wireframe_json(wf), encoder));
  }
  return out;
}

Eigen::Matrix3d random_augmentation(Rng& rng, double max_deg) {
  // Axis permutation with signs, forced to det +1.
  std::array<int, 3> perm{0, 1, 2};
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::Matrix3d r = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) r(i, perm[i]) = uniform_index(rng, 2) ? 1.0 : -1.0;
  if (r.determinant() < 0) r.row(2) *= -1.0;
  if (max_deg > 0) {
    Vec3 axis;
    do {
      axis = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    } while (axis.norm() > 1.0 || axis.norm() < 1e-3);
    double angle = uniform(rng, -max_deg, max_deg) * std::numbers::pi / 180.0;
    r = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix() * r;
  }
  return r;
}

EdgeSetConfig edge_set_config(const TrainConfig& cfg, double spacing) {
  const auto& m = cfg.model;
  EdgeSetConfig e;
  e.eps = m.eps_spacing_factor * spacing;
  e.eps1 = m.eps1;
  e.eps2 = m.eps2;
  e.eps_plus = m.eps_plus;
  e.eps_minus = m.eps_minus;
  e.n_probe = m.n_probe;
  e.inaccurate_per_edge = cfg.inaccurate_per_edge;
  e.max_pred_samples = cfg.max_pred_samples;
  return e;
}

namespace {

using nn::Tensor2;

void add_into(std::vector<Tensor2>& dst, std::size_t offset, const std::vector<Tensor2>& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[offset + i] += src[i];
}

std::vector<const EdgeSample*> draw(const std::vector<const EdgeSample*>& pool, std::size_t n, Rng& rng) {
  std::vector<const EdgeSample*> out;
  if (pool.empty()) return out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[uniform_index(rng, pool.size())]);
  return out;
}

}  // namespace

StepLosses training_step(HeadBundle& bundle, const TrainingObject& object, const EdgeSets& sets,
                         const TrainConfig& cfg, Rng& rng, std::vector<nn::Tensor2>* grads, bool update_stats) {
  const ModelConfig& mc = bundle.config;
  const std::size_t m = mc.m;
  const auto C = static_cast<Eigen::Index>(mc.encoder.out_dim);
  const auto pts = object.index.points();
  const nn::Mode mode = nn::Mode::Train;
  StepLosses out;

  const Eigen::Matrix3d rot = cfg.augment ? random_augmentation(rng, cfg.small_rotation_deg)
                                          : Eigen::Matrix3d::Identity();

  PatchSamplingConfig pc;
  pc.m = m;
  pc.n_pos = cfg.patches_per_step / 2;
  pc.n_neg = cfg.patches_per_step - pc.n_pos;
  pc.neg_edge_fraction = cfg.neg_edge_fraction;
  pc.r_pos = cfg.r_pos;
  pc.pos_seed_radius = cfg.pos_seed_radius;
  pc.flat_margin = cfg.flat_margin;
  PatchSample ps = sample_training_patches(object.index, object.gt, pc, rng);
  const auto& patches = ps.patches;

  std::vector<const EdgeSample*> pos_pool, neg_pool;
  auto collect = [](std::vector<const EdgeSample*>& pool, const std::vector<EdgeSample>& src) {
    for (const auto& s : src) pool.push_back(&s);
  };
  if (cfg.edge_sets & edge_set::kGtPos) collect(pos_pool, sets.gt_pos);
  if (cfg.edge_sets & edge_set::kPredPos) collect(pos_pool, sets.pred_pos);
  if (cfg.edge_sets & edge_set::kGtNeg) collect(neg_pool, sets.gt_neg);
  if (cfg.edge_sets & edge_set::kPredNeg) collect(neg_pool, sets.pred_neg);
  std::vector<const EdgeSample*> batch;
  {
    const std::size_t n = cfg.edges_per_step;
    std::size_t n_pos = neg_pool.empty() ? n : pos_pool.empty() ? 0 : n / 2;
    batch = draw(pos_pool, n_pos, rng);
    auto neg = draw(neg_pool, n - n_pos, rng);
    batch.insert(batch.end(), neg.begin(), neg.end());
  }
  std::vector<std::vector<std::size_t>> queries;
  for (const auto* s : batch) queries.push_back(edge_query_points(s->a, s->b, object.index.tree(), mc.n_s));

  // Points whose features this step needs.
  std::unordered_map<std::size_t, Eigen::Index> row_of;
  std::vector<std::size_t> subset;
  auto need = [&](std::size_t i) {
    auto [it, fresh] = row_of.emplace(i, static_cast<Eigen::Index>(subset.size()));
    if (fresh) subset.push_back(i);
    return it->second;
  };
  for (const auto& p : patches) {
    for (auto i : p.members) need(i);
  }
  for (const auto& q : queries) {
    for (auto i : q) need(i);
  }
  if (subset.empty()) return out;

  Encoder::Cache enc_cache;
  Matrix F = bundle.encoder.forward(object.context, subset, rot, mode, &enc_cache);
  Matrix dF = Matrix::Zero(F.rows(), F.cols());
  std::vector<Tensor2> g_det = bundle.det.zero_grads();
  std::vector<Tensor2> g_loc = bundle.loc.zero_grads();
  std::vector<Tensor2> g_edge = bundle.edge.zero_grads();
  nn::Mlp::Cache det_cache, loc_cache, edge_cache;
  bool used_det = false, used_loc = false, used_edge = false;

  // Vertex detector: BCE on pooled patch features.
  const std::size_t P = patches.size();
  out.patches = P;
  if (P > 0) {
    Matrix stacked(static_cast<Eigen::Index>(P * m), C);
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t i = 0; i < m; ++i) {
        stacked.row(static_cast<Eigen::Index>(p * m + i)) = F.row(row_of.at(patches[p].members[i]));
      }
    }
    nn::MaxPool pool = nn::maxpool_cols(stacked, static_cast<Eigen::Index>(m));
    Matrix prob = nn::sigmoid(bundle.det.forward(pool.out, mode, &det_cache));
    used_det = true;
    std::vector<double> y(P);
    for (std::size_t p = 0; p < P; ++p) y[p] = patches[p].label == PatchLabel::Vertex ? 1.0 : 0.0;
    nn::Loss l = nn::bce({prob.data(), P}, y);
    out.l_pat = l.value;
    if (grads) {
      Matrix dprob = Eigen::Map<const Matrix>(l.grad.data(), static_cast<Eigen::Index>(P), 1);
      Matrix dpooled = bundle.det.backward(det_cache, nn::sigmoid_backward(prob, dprob), g_det);
      Matrix dstacked = nn::maxpool_backward(pool, dpooled);
      for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t i = 0; i < m; ++i) {
          dF.row(row_of.at(patches[p].members[i])) += dstacked.row(static_cast<Eigen::Index>(p * m + i));
        }
      }
    }
  }

  // Vertex localiser: squared error of the weighted mean on corner patches.
  std::vector<const Patch*> corners;
  for (const auto& p : patches) {
    if (p.label == PatchLabel::Vertex && p.gt_vertex) corners.push_back(&p);
  }
  out.positives = corners.size();
  if (!corners.empty()) {
    const auto K = static_cast<Eigen::Index>(corners.size());
    const Eigen::Index stride = C + 3;
    Matrix x(K, stride * static_cast<Eigen::Index>(m));
    for (Eigen::Index k = 0; k < K; ++k) {
      const Patch& p = *corners[static_cast<std::size_t>(k)];
      for (std::size_t i = 0; i < m; ++i) {
        const auto col = static_cast<Eigen::Index>(i) * stride;
        x.block(k, col, 1, C) = F.row(row_of.at(p.members[i]));
        Vec3 d = rot * (pts[p.members[i]] - pts[p.seed]) * mc.loc_coord_scale;
        x.block<1, 3>(k, col + C) = d.transpose();
      }
    }
    Matrix w = nn::softmax_rows(bundle.loc.forward(x, mode, &loc_cache));
    used_loc = true;
    std::vector<Vec3> v(corners.size()), target(corners.size());
    for (std::size_t k = 0; k < corners.size(); ++k) {
      const Patch& p = *corners[k];
      Vec3 acc = Vec3::Zero();
      for (std::size_t i = 0; i < m; ++i) acc += w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) * (pts[p.members[i]] - pts[p.seed]);
      v[k] = pts[p.seed] + acc;
      target[k] = *p.gt_vertex;
    }
    nn::VectorLoss l = nn::mse(v, target);
    out.l_vert = l.value;
    if (grads) {
      Matrix dw(K, static_cast<Eigen::Index>(m));
      for (std::size_t k = 0; k < corners.size(); ++k) {
        const Patch& p = *corners[k];
        for (std::size_t i = 0; i < m; ++i) {
          dw(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
              mc.alpha * l.grad[k].dot(pts[p.members[i]] - pts[p.seed]);
        }
      }
      Matrix dx = bundle.loc.backward(loc_cache, nn::softmax_rows_backward(w, dw), g_loc);
      for (std::size_t k = 0; k < corners.size(); ++k) {
        for (std::size_t i = 0; i < m; ++i) {
          dF.row(row_of.at(corners[k]->members[i])) +=
              dx.block(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i) * stride, 1, C);
        }
      }
    }
  }

  // Edge verifier: balanced BCE on pooled descriptors.
  const std::size_t B = batch.size();
  out.edges = B;
  if (B > 0) {
    const auto D = static_cast<Eigen::Index>(mc.descriptor_dim());
    const auto ns = static_cast<Eigen::Index>(mc.n_s);
    Matrix desc(static_cast<Eigen::Index>(B), D);
    std::vector<nn::MaxPool> pools(B);
    for (std::size_t s = 0; s < B; ++s) {
      Matrix rows(ns, C);
      for (Eigen::Index k = 0; k < ns; ++k) rows.row(k) = F.row(row_of.at(queries[s][static_cast<std::size_t>(k)]));
      pools[s] = nn::maxpool_cols(rows, static_cast<Eigen::Index>(mc.stride));
      desc.row(static_cast<Eigen::Index>(s)) = Eigen::Map<const Matrix>(pools[s].out.data(), 1, D);
    }
    Matrix prob = nn::sigmoid(bundle.edge.forward(desc, mode, &edge_cache));
    used_edge = true;
    std::vector<double> y(B);
    for (std::size_t s = 0; s < B; ++s) y[s] = batch[s]->positive ? 1.0 : 0.0;
    nn::Loss l = nn::balanced_bce({prob.data(), B}, y);
    out.l_edge = l.value;
    out.edge_fallback = l.fallback;
    if (grads) {
      Matrix dprob = Eigen::Map<const Matrix>(l.grad.data(), static_cast<Eigen::Index>(B), 1) * mc.beta;
      Matrix ddesc = bundle.edge.backward(edge_cache, nn::sigmoid_backward(prob, dprob), g_edge);
      for (std::size_t s = 0; s < B; ++s) {
        Matrix dpooled = Eigen::Map<const Matrix>(ddesc.row(static_cast<Eigen::Index>(s)).data(),
                                                  pools[s].out.rows(), C);
        Matrix drows = nn::maxpool_backward(pools[s], dpooled);
        for (Eigen::Index k = 0; k < ns; ++k) dF.row(row_of.at(queries[s][static_cast<std::size_t>(k)])) += drows.row(k);
      }
    }
  }

  out.total = out.l_pat + mc.alpha * out.l_vert + mc.beta * out.l_edge;

  if (grads) {
    std::vector<Tensor2> g_enc = bundle.encoder.zero_grads();
    bundle.encoder.backward(enc_cache, dF, g_enc);
    if (grads->size() != bundle.parameters().size()) *grads = bundle.zero_grads();
    std::size_t off = 0;
    add_into(*grads, off, g_enc);
    off += g_enc.size();
    add_into(*grads, off, g_det);
    off += g_det.size();
    add_into(*grads, off, g_loc);
    off += g_loc.size();
    add_into(*grads, off, g_edge);
  }
  if (update_stats) {
    bundle.encoder.update_running_stats(enc_cache);
    if (used_det) bundle.det.update_running_stats(det_cache);
    if (used_loc) bundle.loc.update_running_stats(loc_cache);
    if (used_edge) bundle.edge.update_running_stats(edge_cache);
  }
  return out;
}

double validation_msap(const HeadBundle& bundle, const std::vector<TrainingObject>& objects,
                       const InferenceConfig& cfg) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& obj : objects) {
    if (obj.gt.edge_count() == 0) continue;
    Matrix features = bundle.encoder.encode(obj.context, cfg.threads);
    ScoredWireframe wf = extract_from_index(obj.index, features, bundle, cfg);
    sum += mean_structural_ap(wf, obj.gt);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

TrainResult train(const std::vector<TrainingObject>& train_set, const std::vector<TrainingObject>& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw InvalidInput("training needs at least one training object");
  TrainResult result;
  result.bundle = HeadBundle::create(cfg.model, derive_seed(cfg.seed, "init"));
  HeadBundle& bundle = result.bundle;
  auto params = bundle.parameters();
  nn::AdamState adam = nn::make_adam_state(params);

  const std::size_t n = train_set.size();
  std::vector<EdgeSets> sets(n);
  for (std::size_t o = 0; o < n; ++o) {
    Rng rng = make_rng(cfg.seed, "gt-edge-sets", o);
    sets[o] = build_gt_edge_sets(train_set[o].gt, train_set[o].index,
                                 edge_set_config(cfg, train_set[o].index.spacing()), rng);
  }
  const bool use_pred = cfg.edge_sets & (edge_set::kPredPos | edge_set::kPredNeg);
  const std::size_t steps = cfg.steps_per_epoch ? cfg.steps_per_epoch : n;

  std::optional<HeadBundle> best;
  double best_msap = -1.0;
  std::size_t global_step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !result.diverged; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    nn::AdamConfig adam_cfg = cfg.adam;
    if (cfg.lr_halve_every > 0) adam_cfg.lr *= std::pow(0.5, static_cast<double>((epoch - 1) / cfg.lr_halve_every));
    log.lr = adam_cfg.lr;

    if (use_pred) {
      for (std::size_t o = 0; o < n; ++o) {
        const auto& obj = train_set[o];
        Matrix features = bundle.encoder.encode(obj.context, cfg.threads);
        auto raw = predict_vertices(obj.index, features, bundle, cfg.infer.vertex_thresh, cfg.infer.patch_coverage,
                                    cfg.threads);
        auto kept = vertex_nms(raw, cfg.infer.vertex_nms_radius);
        std::vector<Vec3> positions;
        for (const auto& v : kept) positions.push_back(v.position);
        Rng rng = make_rng(cfg.seed, "pred-edge-sets", (epoch - 1) * n + o);
        build_pred_edge_sets(sets[o], obj.gt, positions, edge_set_config(cfg, obj.index.spacing()), rng);
        log.pred_pos += sets[o].pred_pos.size();
        log.pred_neg += sets[o].pred_neg.size();
      }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng order_rng = make_rng(cfg.seed, "epoch-order", epoch);
    std::shuffle(order.begin(), order.end(), order_rng);

    for (std::size_t s = 0; s < steps; ++s, ++global_step) {
      const std::size_t o = order[s % n];
      Rng rng = make_rng(cfg.seed, "step", global_step);
      std::vector<nn::Tensor2> grads = bundle.zero_grads();
      std::vector<nn::Tensor2> saved_buffers;
      for (auto* b : bundle.buffers()) saved_buffers.push_back(*b);
      StepLosses l;
      bool finite = true;
      try {
        l = training_step(bundle, train_set[o], sets[o], cfg, rng, &grads, true);
        finite = std::isfinite(l.total);
        for (const auto& g : grads) finite = finite && g.allFinite();
      } catch (const InvalidInput& ex) {
        finite = false;
        result.message = ex.what();
      }
      if (!finite) {
        auto buffers = bundle.buffers();
        for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i] = saved_buffers[i];
        result.diverged = true;
        if (result.message.empty()) result.message = "non-finite loss or gradient";
        result.message = "training diverged at epoch " + std::to_string(epoch) + ", step " +
                         std::to_string(s + 1) + ": " + result.message;
        break;
      }
      nn::adam_step(params, grads, adam, adam_cfg);
      log.l_pat += l.l_pat / static_cast<double>(steps);
      log.l_vert += l.l_vert / static_cast<double>(steps);
      log.l_edge += l.l_edge / static_cast<double>(steps);
      log.total += l.total / static_cast<double>(steps);
    }
    if (result.diverged) break;

    const bool validate_now = !val_set.empty() && cfg.val_every > 0 &&
                              (epoch % cfg.val_every == 0 || epoch == cfg.epochs);
    if (validate_now) {
      log.val_msap = validation_msap(bundle, val_set, cfg.infer);
      if (cfg.keep_best && *log.val_msap > best_msap) {
        best_msap = *log.val_msap;
        best = bundle;
        result.best_epoch = epoch;
      }
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  if (best && !result.diverged) {
    result.bundle = std::move(*best);
  } else if (!result.log.empty()) {
    result.best_epoch = result.log.back().epoch;
  }
  return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,L_pat,L_vert,L_edge,val_msAP,L_total,lr,seconds,pred_pos,pred_neg\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.l_pat << ',' << e.l_vert << ',' << e.l_edge << ',';
    if (e.val_msap) out << *e.val_msap;
    out << ',' << e.total << ',' << e.lr << ',' << e.seconds << ',' << e.pred_pos << ',' << e.pred_neg << '\n';
  }
  return out.str();
}

}  // namespace pc2wf
