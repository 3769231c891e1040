#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pc2wf/backbone.hpp"
#include "pc2wf/edge_sets.hpp"
#include "pc2wf/infer.hpp"
#include "pc2wf/model.hpp"
#include "pc2wf/neigh.hpp"

namespace pc2wf {

namespace edge_set {
inline constexpr unsigned kGtPos = 1, kGtNeg = 2, kPredPos = 4, kPredNeg = 8, kAll = 15;
}

// "gt+,gt-,pred+,pred-" (any subset, comma separated) -> bit mask.
unsigned parse_edge_set_list(const std::string& text);
std::string edge_set_list(unsigned mask);

struct TrainConfig {
  ModelConfig model;
  std::size_t epochs = 30;
  std::size_t steps_per_epoch = 0;    // 0: one step per training object
  std::size_t patches_per_step = 64;  // half positive, half negative
  std::size_t edges_per_step = 64;    // half from E+, half from E-
  double neg_edge_fraction = 0.5;
  double r_pos = 0.02;
  double pos_seed_radius = 0.02;
  double flat_margin = 0.05;
  nn::AdamConfig adam;
  std::size_t lr_halve_every = 10;    // epochs; 0 disables the schedule
  unsigned edge_sets = edge_set::kAll;
  bool augment = true;
  double small_rotation_deg = 15.0;
  std::size_t inaccurate_per_edge = 4;
  std::size_t max_pred_samples = 2000;
  std::size_t val_every = 1;          // epochs between validation runs; 0 disables
  bool keep_best = true;              // return the parameters with the best validation msAP
  InferenceConfig infer;              // used for the per-epoch vertex refresh and validation
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

// A normalised training cloud with everything precomputed that does not
// depend on the network.
struct TrainingObject {
  std::string name;
  CloudIndex index;
  Wireframe gt;
  PointContext context;
};

TrainingObject prepare_object(std::string name, const PointCloud& cloud, const Wireframe& gt,
                              const EncoderConfig& encoder);

// Reads every {name}.xyz / {name}.wf.json pair in `dir`, sorted by name.
std::vector<TrainingObject> load_objects(const std::filesystem::path& dir, const EncoderConfig& encoder);

struct EpochLog {
  std::size_t epoch = 0;
  double l_pat = 0, l_vert = 0, l_edge = 0, total = 0;
  std::optional<double> val_msap;
  double lr = 0;
  double seconds = 0;
  std::size_t pred_pos = 0, pred_neg = 0;  // refreshed E^pred sizes over the training set
};

struct StepLosses {
  double l_pat = 0, l_vert = 0, l_edge = 0, total = 0;
  std::size_t patches = 0, positives = 0, edges = 0;
  bool edge_fallback = false;  // single-class edge batch
};

// One forward/backward pass of the joint loss on a single object. Gradients
// are accumulated into `grads` (aligned with bundle.parameters()) when given;
// batchnorm running statistics are updated only when `update_stats` is set.
StepLosses training_step(HeadBundle& bundle, const TrainingObject& object, const EdgeSets& sets,
                         const TrainConfig& cfg, Rng& rng, std::vector<nn::Tensor2>* grads, bool update_stats);

// Uniformly random rotation from the 24 axis-aligned ones, followed by a
// rotation of at most `max_deg` degrees about a random axis.
Eigen::Matrix3d random_augmentation(Rng& rng, double max_deg);

EdgeSetConfig edge_set_config(const TrainConfig& cfg, double spacing);

struct TrainResult {
  HeadBundle bundle;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  bool diverged = false;
  std::string message;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// On a non-finite loss or gradient training stops and the last finite
// parameters are returned with diverged = true.
TrainResult train(const std::vector<TrainingObject>& train_set, const std::vector<TrainingObject>& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Mean msAP of the bundle's extractions over the objects.
double validation_msap(const HeadBundle& bundle, const std::vector<TrainingObject>& objects,
                       const InferenceConfig& cfg);

std::string training_log_csv(const std::vector<EpochLog>& log);

}  // namespace pc2wf
