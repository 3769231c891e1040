#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pc2wf/infer.hpp"
#include "pc2wf/metrics.hpp"
#include "pc2wf/model.hpp"

namespace pc2wf {

struct EvalConfig {
  double c_v = 1.0;
  double c_e = 1.0;
  int threads = 1;
};

struct ObjectReport {
  std::string name;
  std::array<double, 3> ap_v{}, ap_e{}, sap{};
  double map_v = 0, map_e = 0, msap = 0;
  // Edit-distance columns: pred #v, gt #v, edited #v, WED_v, pred #e, gt #e, edited #e, WED_e, WED
  double pred_v = 0, gt_v = 0, edited_v = 0, wed_v = 0;
  double pred_e = 0, gt_e = 0, edited_e = 0, wed_e = 0, wed = 0;
  std::vector<std::pair<std::string, PrCurve>> curves;  // e.g. "sap_0.05"
};

struct CorpusReport {
  std::vector<ObjectReport> objects;
  ObjectReport mean;
  std::vector<std::string> unmatched;  // files without a counterpart, skipped
};

ObjectReport evaluate_object(const std::string& name, const ScoredWireframe& pred, const Wireframe& gt,
                             std::span<const Vec3> cloud, const EvalConfig& cfg);

// Fills `mean` from `objects`.
void summarize(CorpusReport& report);

// Pairs {name}.wf.json in pred_dir with {name}.wf.json / {name}.xyz in gt_dir.
CorpusReport eval_prediction_dir(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                 const EvalConfig& cfg);
// Runs extraction on every {name}.xyz in gt_dir first.
CorpusReport eval_model(const HeadBundle& bundle, const std::filesystem::path& gt_dir,
                        const InferenceConfig& infer, const EvalConfig& cfg);

std::string report_csv(const CorpusReport& report);
std::string report_table(const CorpusReport& report);
// One CSV per object and curve: threshold,precision,recall.
void write_pr_dump(const std::filesystem::path& dir, const CorpusReport& report);

// Names of the *.wf.json files in a directory (without the suffix), sorted.
std::vector<std::string> wireframe_names(const std::filesystem::path& dir);

}  // namespace pc2wf
