#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "pc2wf/eval.hpp"
#include "pc2wf/io.hpp"
#include "pc2wf/parallel.hpp"

namespace pc2wf {

namespace {

constexpr const char* kWireframeSuffix = ".wf.json";

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string threshold_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", t);
  return buf;
}

}  // namespace

std::vector<std::string> wireframe_names(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("no such directory: " + dir.string());
  std::vector<std::string> out;
  const std::string suffix = kWireframeSuffix;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    auto name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) out.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

ObjectReport evaluate_object(const std::string& name, const ScoredWireframe& pred, const Wireframe& gt,
                             std::span<const Vec3> cloud, const EvalConfig& cfg) {
  ObjectReport r;
  r.name = name;
  for (std::size_t i = 0; i < 3; ++i) {
    auto v = vertex_ap(pred, gt, kVertexThresholds[i]);
    auto e = edge_point_ap(pred, gt, cloud, kEdgePointThresholds[i]);
    auto s = structural_ap(pred, gt, kStructuralThresholds[i]);
    r.ap_v[i] = v.ap;
    r.ap_e[i] = e.ap;
    r.sap[i] = s.ap;
    r.curves.emplace_back("vertex_" + threshold_tag(kVertexThresholds[i]), std::move(v));
    r.curves.emplace_back("edgepoint_" + threshold_tag(kEdgePointThresholds[i]), std::move(e));
    r.curves.emplace_back("sap_" + threshold_tag(kStructuralThresholds[i]), std::move(s));
  }
  r.map_v = (r.ap_v[0] + r.ap_v[1] + r.ap_v[2]) / 3.0;
  r.map_e = (r.ap_e[0] + r.ap_e[1] + r.ap_e[2]) / 3.0;
  r.msap = (r.sap[0] + r.sap[1] + r.sap[2]) / 3.0;
  WedReport w = wireframe_edit_distance(pred.wireframe(), gt, cfg.c_v, cfg.c_e);
  r.pred_v = static_cast<double>(w.pred_vertices);
  r.gt_v = static_cast<double>(w.gt_vertices);
  r.edited_v = static_cast<double>(w.edited_vertices);
  r.wed_v = w.wed_v;
  r.pred_e = static_cast<double>(pred.wireframe().edge_count());
  r.gt_e = static_cast<double>(gt.edge_count());
  r.edited_e = static_cast<double>(w.edited_edges());
  r.wed_e = w.wed_e;
  r.wed = w.wed;
  return r;
}

void summarize(CorpusReport& report) {
  ObjectReport m;
  m.name = "mean";
  const double n = static_cast<double>(std::max<std::size_t>(report.objects.size(), 1));
  for (const auto& o : report.objects) {
    for (std::size_t i = 0; i < 3; ++i) {
      m.ap_v[i] += o.ap_v[i] / n;
      m.ap_e[i] += o.ap_e[i] / n;
      m.sap[i] += o.sap[i] / n;
    }
    m.map_v += o.map_v / n;
    m.map_e += o.map_e / n;
    m.msap += o.msap / n;
    m.pred_v += o.pred_v / n;
    m.gt_v += o.gt_v / n;
    m.edited_v += o.edited_v / n;
    m.wed_v += o.wed_v / n;
    m.pred_e += o.pred_e / n;
    m.gt_e += o.gt_e / n;
    m.edited_e += o.edited_e / n;
    m.wed_e += o.wed_e / n;
    m.wed += o.wed / n;
  }
  report.mean = std::move(m);
}

CorpusReport eval_prediction_dir(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                 const EvalConfig& cfg) {
  auto preds = wireframe_names(pred_dir);
  auto gts = wireframe_names(gt_dir);
  std::set<std::string> gt_set(gts.begin(), gts.end()), pred_set(preds.begin(), preds.end());
  CorpusReport report;
  std::vector<std::string> names;
  for (const auto& p : preds) {
    if (gt_set.count(p)) names.push_back(p);
    else report.unmatched.push_back((pred_dir / (p + kWireframeSuffix)).string());
  }
  for (const auto& g : gts) {
    if (!pred_set.count(g)) report.unmatched.push_back((gt_dir / (g + kWireframeSuffix)).string());
  }
  report.objects.resize(names.size());
  parallel_for(names.size(), cfg.threads, [&](std::size_t i) {
    const auto& name = names[i];
    auto pred = read_scored_wireframe_json(pred_dir / (name + kWireframeSuffix));
    auto gt = read_wireframe_json(gt_dir / (name + kWireframeSuffix));
    auto cloud = read_cloud(gt_dir / (name + ".xyz"));
    report.objects[i] = evaluate_object(name, pred, gt, cloud.points(), {cfg.c_v, cfg.c_e, 1});
  });
  summarize(report);
  return report;
}

CorpusReport eval_model(const HeadBundle& bundle, const std::filesystem::path& gt_dir,
                        const InferenceConfig& infer, const EvalConfig& cfg) {
  auto names = wireframe_names(gt_dir);
  CorpusReport report;
  std::vector<std::string> usable;
  for (const auto& n : names) {
    if (std::filesystem::exists(gt_dir / (n + ".xyz"))) usable.push_back(n);
    else report.unmatched.push_back((gt_dir / (n + kWireframeSuffix)).string());
  }
  report.objects.resize(usable.size());
  InferenceConfig serial = infer;
  serial.threads = 1;
  parallel_for(usable.size(), cfg.threads, [&](std::size_t i) {
    const auto& name = usable[i];
    auto cloud = read_cloud(gt_dir / (name + ".xyz"));
    auto gt = read_wireframe_json(gt_dir / (name + kWireframeSuffix));
    auto ex = extract_wireframe(cloud, bundle, serial);
    report.objects[i] = evaluate_object(name, ex.world, gt, cloud.points(), {cfg.c_v, cfg.c_e, 1});
  });
  summarize(report);
  return report;
}

std::string report_csv(const CorpusReport& report) {
  std::ostringstream out;
  out << "object,mAPv,APv_0.02,APv_0.03,APv_0.05,mAPe,APe_0.01,APe_0.02,APe_0.03,msAP,sAP_0.03,sAP_0.05,sAP_0.07,"
         "pred_v,gt_v,edited_v,WED_v,pred_e,gt_e,edited_e,WED_e,WED\n";
  auto row = [&](const ObjectReport& o) {
    out << o.name << ',' << fmt(o.map_v, 6);
    for (double v : o.ap_v) out << ',' << fmt(v, 6);
    out << ',' << fmt(o.map_e, 6);
    for (double v : o.ap_e) out << ',' << fmt(v, 6);
    out << ',' << fmt(o.msap, 6);
    for (double v : o.sap) out << ',' << fmt(v, 6);
    for (double v : {o.pred_v, o.gt_v, o.edited_v, o.wed_v, o.pred_e, o.gt_e, o.edited_e, o.wed_e, o.wed}) {
      out << ',' << fmt(v, 6);
    }
    out << '\n';
  };
  for (const auto& o : report.objects) row(o);
  row(report.mean);
  return out.str();
}

std::string report_table(const CorpusReport& report) {
  std::size_t w = 6;
  for (const auto& o : report.objects) w = std::max(w, o.name.size());
  std::ostringstream out;
  char line[512];
  std::snprintf(line, sizeof(line), "%-*s %6s %6s %6s | %6s %6s %6s %6s | %6s %6s %6s %6s | %6s\n",
                static_cast<int>(w), "object", "mAPv", "mAPe", "msAP", "pred#v", "gt#v", "edit#v", "WED_v",
                "pred#e", "gt#e", "edit#e", "WED_e", "WED");
  out << line;
  auto row = [&](const ObjectReport& o) {
    std::snprintf(line, sizeof(line),
                  "%-*s %6.3f %6.3f %6.3f | %6.1f %6.1f %6.1f %6.3f | %6.1f %6.1f %6.1f %6.3f | %6.3f\n",
                  static_cast<int>(w), o.name.c_str(), o.map_v, o.map_e, o.msap, o.pred_v, o.gt_v, o.edited_v,
                  o.wed_v, o.pred_e, o.gt_e, o.edited_e, o.wed_e, o.wed);
    out << line;
  };
  for (const auto& o : report.objects) row(o);
  out << std::string(w + 90, '-') << '\n';
  row(report.mean);
  return out.str();
}

void write_pr_dump(const std::filesystem::path& dir, const CorpusReport& report) {
  for (const auto& o : report.objects) {
    for (const auto& [tag, curve] : o.curves) {
      std::ostringstream out;
      out << "threshold,precision,recall\n";
      for (const auto& p : curve.points) out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
      write_text_file(dir / (o.name + "." + tag + ".csv"), out.str());
    }
  }
}

}  // namespace pc2wf
