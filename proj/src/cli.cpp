#include "pc2wf/cli.hpp"

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pc2wf/eval.hpp"
#include "pc2wf/infer.hpp"
#include "pc2wf/io.hpp"
#include "pc2wf/synth.hpp"
#include "pc2wf/train.hpp"

namespace fs = std::filesystem;

namespace pc2wf {

namespace {

std::vector<ShapeKind> parse_shapes(const std::string& text) {
  if (text == "all") return all_shape_kinds();
  std::vector<ShapeKind> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(shape_kind_from_string(item));
  }
  if (out.empty()) throw InvalidInput("no shape given");
  return out;
}

struct Switches {
  bool no_vertex_nms = false;
  bool no_edge_nms = false;
  bool no_straighten = false;

  void apply(InferenceConfig& cfg) const {
    cfg.vertex_nms = !no_vertex_nms;
    cfg.edge_nms = !no_edge_nms;
    cfg.straighten = !no_straighten;
  }
};

void add_inference_flags(CLI::App* cmd, InferenceConfig& cfg, Switches& sw) {
  cmd->add_option("--vertex-thresh", cfg.vertex_thresh, "Vertex probability threshold")->capture_default_str();
  cmd->add_option("--edge-thresh", cfg.edge_thresh, "Edge probability threshold")->capture_default_str();
  cmd->add_option("--vertex-nms", cfg.vertex_nms_radius, "Vertex NMS radius")->capture_default_str();
  cmd->add_option("--edge-nms", cfg.edge_nms_eta, "Edge NMS displacement threshold")->capture_default_str();
  cmd->add_option("--tau-factor", cfg.tau_spacing_factor, "Surface pruning tolerance, in point spacings")
      ->capture_default_str();
  cmd->add_option("--n-probe", cfg.n_probe, "Probes per candidate edge")->capture_default_str();
  cmd->add_option("--collinear-tol", cfg.collinear_tol, "Straightening tolerance (radians)")->capture_default_str();
  cmd->add_option("--patch-coverage", cfg.patch_coverage, "Mean number of inference patches per point")
      ->capture_default_str();
  cmd->add_option("--max-vertices", cfg.max_vertices, "Vertex limit for the edge search (0: none)")
      ->capture_default_str();
  cmd->add_flag("--no-vertex-nms", sw.no_vertex_nms, "Skip vertex NMS");
  cmd->add_flag("--no-edge-nms", sw.no_edge_nms, "Skip edge NMS");
  cmd->add_flag("--no-straighten", sw.no_straighten, "Skip straightening");
}

void print_config(int threads, const CLI::App* cmd, std::uint64_t seed) {
  std::cout << "# pc2wf " << cmd->get_name() << "\nthreads=" << threads << "\n" << cmd->config_to_str(true, false);
  std::cout << "# seed " << seed << std::endl;
}

int cmd_scan(const std::string& shapes_text, std::size_t count, ScanConfig scan, DatasetSpec split,
             const fs::path& out, int threads) {
  auto shapes = parse_shapes(shapes_text);
  scan.validate();
  if (count == 0) throw InvalidInput("--count must be positive");
  if (count < 3) {
    for (std::size_t i = 0; i < count; ++i) {
      Sample s = make_sample(i, shapes[i % shapes.size()], scan, scan.seed, threads);
      write_sample(s, out);
      std::cout << s.name << ": " << s.cloud.size() << " points, " << s.gt.vertex_count() << " vertices, "
                << s.gt.edge_count() << " edges\n";
    }
    return 0;
  }
  split.count = count;
  split.families = shapes;
  split.scan = scan;
  split.seed = scan.seed;
  auto summary = make_dataset(split, out, threads);
  std::cout << "wrote " << summary.samples.size() << " samples (" << summary.train << " train, " << summary.val
            << " val, " << summary.test << " test) to " << out.string() << "\n";
  return 0;
}

int cmd_train(const fs::path& corpus, TrainConfig cfg, const std::string& sets, bool no_bn,
              const std::string& encoder, const fs::path& out, fs::path log_path) {
  cfg.edge_sets = parse_edge_set_list(sets);
  cfg.model.encoder.mode = encoder_mode_from_string(encoder);
  if (no_bn) {
    cfg.model.batchnorm = false;
    cfg.model.encoder.batchnorm = false;
  }
  cfg.validate();
  auto train_objs = load_objects(corpus / "train", cfg.model.encoder);
  std::vector<TrainingObject> val_objs;
  if (fs::is_directory(corpus / "val")) val_objs = load_objects(corpus / "val", cfg.model.encoder);
  std::cout << "training on " << train_objs.size() << " objects, validating on " << val_objs.size() << std::endl;
  auto result = train(train_objs, val_objs, cfg, [](const EpochLog& e) {
    std::cout << "epoch " << e.epoch << "  L_pat " << e.l_pat << "  L_vert " << e.l_vert << "  L_edge " << e.l_edge;
    if (e.val_msap) std::cout << "  val msAP " << *e.val_msap;
    std::cout << "  (" << e.seconds << " s)" << std::endl;
  });
  if (log_path.empty()) log_path = fs::path(out.string() + ".log.csv");
  write_text_file(log_path, training_log_csv(result.log));
  save_checkpoint(out, result.bundle);
  if (result.diverged) {
    std::cerr << "error: " << result.message << "; last finite parameters saved to " << out.string() << "\n";
    return 1;
  }
  std::cout << "saved " << out.string() << " (epoch " << result.best_epoch << ")" << std::endl;
  return 0;
}

void infer_one(const HeadBundle& bundle, const fs::path& cloud_path, const fs::path& out, const fs::path& obj,
               const fs::path& dump_scores, const fs::path& features_path, const InferenceConfig& cfg) {
  PointCloud cloud = read_cloud(cloud_path);
  auto ex = extract_wireframe(cloud, bundle, cfg);
  write_wireframe_json(out, ex.world);
  if (!obj.empty()) write_obj(obj, ex.world.wireframe());
  std::cout << cloud_path.filename().string() << ": " << ex.world.wireframe().vertex_count() << " vertices, "
            << ex.world.wireframe().edge_count() << " edges (" << ex.raw_vertices << " raw detections, "
            << ex.edges.candidates << " candidates, " << ex.edges.pruned << " off-surface)\n";
  if (!dump_scores.empty()) {
    InferenceConfig all = cfg;
    all.vertex_thresh = 0.0;
    all.edge_thresh = 0.0;
    all.edge_nms = false;
    all.straighten = false;
    write_wireframe_json(dump_scores, extract_wireframe(cloud, bundle, all).world);
  }
  if (!features_path.empty()) {
    auto [normalized, t] = normalize(cloud);
    CloudIndex index(std::move(normalized), 8, std::max<std::size_t>(16, bundle.config.encoder.k));
    write_features(features_path, bundle.encoder.encode(make_point_context(index, bundle.config.encoder), cfg.threads));
  }
}

int cmd_infer(const fs::path& model, const fs::path& cloud, const fs::path& out, const fs::path& obj,
              const fs::path& dump_scores, const fs::path& features, const InferenceConfig& cfg) {
  HeadBundle bundle = load_checkpoint(model);
  if (!fs::is_directory(cloud)) {
    infer_one(bundle, cloud, out, obj, dump_scores, features, cfg);
    return 0;
  }
  std::vector<fs::path> clouds;
  for (const auto& e : fs::directory_iterator(cloud)) {
    if (e.path().extension() == ".xyz") clouds.push_back(e.path());
  }
  std::sort(clouds.begin(), clouds.end());
  for (const auto& c : clouds) {
    auto stem = c.stem().string();
    infer_one(bundle, c, out / (stem + ".wf.json"), obj.empty() ? fs::path() : obj / (stem + ".obj"),
              dump_scores.empty() ? fs::path() : dump_scores / (stem + ".scores.wf.json"), fs::path(), cfg);
  }
  return 0;
}

int cmd_eval(const fs::path& pred, const fs::path& gt, const EvalConfig& ecfg, const InferenceConfig& icfg,
             const fs::path& csv, const fs::path& pr_dump) {
  CorpusReport report = fs::is_directory(pred) ? eval_prediction_dir(pred, gt, ecfg)
                                               : eval_model(load_checkpoint(pred), gt, icfg, ecfg);
  std::cout << report_table(report);
  if (!csv.empty()) write_text_file(csv, report_csv(report));
  if (!pr_dump.empty()) write_pr_dump(pr_dump, report);
  if (!report.unmatched.empty()) {
    std::cerr << "skipped " << report.unmatched.size() << " unmatched file(s):\n";
    for (const auto& u : report.unmatched) std::cerr << "  " << u << "\n";
    return 1;
  }
  return 0;
}

int cmd_export(const fs::path& wf, const fs::path& obj, const fs::path& model, const fs::path& cloud,
               const fs::path& features, int threads) {
  int done = 0;
  if (!wf.empty()) {
    if (obj.empty()) throw InvalidInput("--wf needs --obj");
    write_obj(obj, read_wireframe_json(wf));
    ++done;
  }
  if (!features.empty()) {
    if (model.empty() || cloud.empty()) throw InvalidInput("--features needs --model and --cloud");
    HeadBundle bundle = load_checkpoint(model);
    auto [normalized, t] = normalize(read_cloud(cloud));
    CloudIndex index(std::move(normalized), 8, std::max<std::size_t>(16, bundle.config.encoder.k));
    write_features(features, bundle.encoder.encode(make_point_context(index, bundle.config.encoder), threads));
    ++done;
  }
  if (!done) throw InvalidInput("nothing to export (use --wf/--obj or --model/--cloud/--features)");
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Point cloud to wireframe extraction"};
  app.set_config("--config", "", "Read options from a TOML/INI file");
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads")->capture_default_str();

  // scan
  auto* scan = app.add_subcommand("scan", "Generate synthetic shapes and virtual scans");
  std::string shapes = "box";
  std::size_t count = 1;
  ScanConfig scfg;
  DatasetSpec split;
  fs::path scan_out;
  scan->add_option("--shape", shapes, "Shape family or comma list (box,lshape,notch,prism,staircase,table,twoboxes,all)")
      ->capture_default_str();
  scan->add_option("--count", count, "Number of samples (3 or more: train/val/test split)")->capture_default_str();
  scan->add_option("--sigma", scfg.noise_sigma, "Noise standard deviation")->capture_default_str();
  scan->add_option("--clip", scfg.noise_clip, "Noise clipping bound")->capture_default_str();
  scan->add_option("--rays", scfg.rays_per_camera, "Rays per camera")->capture_default_str();
  scan->add_option("--cameras", scfg.cameras, "Number of cameras")->capture_default_str();
  scan->add_option("--seed", scfg.seed, "Random seed")->capture_default_str();
  scan->add_option("--train-ratio", split.train_ratio)->capture_default_str();
  scan->add_option("--val-ratio", split.val_ratio)->capture_default_str();
  scan->add_option("--test-ratio", split.test_ratio)->capture_default_str();
  scan->add_option("--out", scan_out, "Output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a corpus");
  TrainConfig tcfg;
  fs::path corpus, model_out, log_path;
  std::string sets = "gt+,gt-,pred+,pred-", encoder = "learned";
  bool no_bn = false, no_augment = false;
  Switches train_sw, infer_sw, eval_sw;
  tr->add_option("--corpus", corpus, "Corpus directory with train/ and val/")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--epochs", tcfg.epochs)->capture_default_str();
  tr->add_option("--m", tcfg.model.m, "Patch size")->capture_default_str();
  tr->add_option("--alpha", tcfg.model.alpha, "Localisation loss weight")->capture_default_str();
  tr->add_option("--beta", tcfg.model.beta, "Edge loss weight")->capture_default_str();
  tr->add_option("--ablate-edge-sets", sets, "Edge sets to train with")->capture_default_str();
  tr->add_option("--seed", tcfg.seed)->capture_default_str();
  tr->add_option("--out", model_out, "Checkpoint path")->required();
  tr->add_option("--log", log_path, "Training log CSV (default: <out>.log.csv)");
  tr->add_option("--steps-per-epoch", tcfg.steps_per_epoch, "0: one per training object")->capture_default_str();
  tr->add_option("--patches", tcfg.patches_per_step, "Patches per step")->capture_default_str();
  tr->add_option("--edge-samples", tcfg.edges_per_step, "Edge samples per step")->capture_default_str();
  tr->add_option("--lr", tcfg.adam.lr)->capture_default_str();
  tr->add_option("--lr-halve-every", tcfg.lr_halve_every, "Epochs between learning-rate halvings")->capture_default_str();
  tr->add_option("--val-every", tcfg.val_every, "Epochs between validation runs")->capture_default_str();
  tr->add_option("--pos-seed-radius", tcfg.pos_seed_radius)->capture_default_str();
  tr->add_option("--k-enc", tcfg.model.encoder.k, "Encoder neighbours per point")->capture_default_str();
  tr->add_option("--encoder", encoder, "learned or handcrafted")->capture_default_str();
  tr->add_flag("--no-batchnorm", no_bn, "Disable batch normalisation");
  tr->add_flag("--no-augment", no_augment, "Disable rotation augmentation");
  add_inference_flags(tr, tcfg.infer, train_sw);

  // infer
  auto* inf = app.add_subcommand("infer", "Extract a wireframe from a point cloud");
  InferenceConfig icfg;
  fs::path model, cloud, infer_out, obj, dump_scores, features;
  inf->add_option("--model", model)->required()->check(CLI::ExistingFile);
  inf->add_option("--cloud", cloud, "Cloud file or directory of .xyz files")->required()->check(CLI::ExistingPath);
  inf->add_option("--out", infer_out, "Wireframe JSON (directory when --cloud is one)")->required();
  inf->add_option("--obj", obj, "Also write OBJ");
  inf->add_option("--dump-scores", dump_scores, "Write every verified candidate with its score");
  inf->add_option("--features", features, "Write per-point features");
  add_inference_flags(inf, icfg, infer_sw);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate predictions against ground truth");
  EvalConfig ecfg;
  InferenceConfig eicfg;
  fs::path pred, gt, csv, pr_dump;
  ev->add_option("--pred", pred, "Prediction directory or model checkpoint")->required()->check(CLI::ExistingPath);
  ev->add_option("--gt", gt, "Ground-truth directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--cv", ecfg.c_v, "Vertex translation cost")->capture_default_str();
  ev->add_option("--ce", ecfg.c_e, "Edge edit cost")->capture_default_str();
  ev->add_option("--csv", csv, "Write the report as CSV");
  ev->add_option("--pr-dump", pr_dump, "Directory for PR curves");
  add_inference_flags(ev, eicfg, eval_sw);

  // export
  auto* ex = app.add_subcommand("export", "Convert wireframes or dump features");
  fs::path ex_wf, ex_obj, ex_model, ex_cloud, ex_features;
  ex->add_option("--wf", ex_wf, "Wireframe JSON")->check(CLI::ExistingFile);
  ex->add_option("--obj", ex_obj, "OBJ output");
  ex->add_option("--model", ex_model)->check(CLI::ExistingFile);
  ex->add_option("--cloud", ex_cloud)->check(CLI::ExistingFile);
  ex->add_option("--features", ex_features, "Feature output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads < 1) throw InvalidInput("--threads must be at least 1");
    if (scan->parsed()) {
      print_config(threads, scan, scfg.seed);
      return cmd_scan(shapes, count, scfg, split, scan_out, threads);
    }
    if (tr->parsed()) {
      print_config(threads, tr, tcfg.seed);
      tcfg.augment = !no_augment;
      train_sw.apply(tcfg.infer);
      tcfg.threads = threads;
      tcfg.infer.threads = threads;
      return cmd_train(corpus, tcfg, sets, no_bn, encoder, model_out, log_path);
    }
    if (inf->parsed()) {
      print_config(threads, inf, 0);
      infer_sw.apply(icfg);
      icfg.threads = threads;
      return cmd_infer(model, cloud, infer_out, obj, dump_scores, features, icfg);
    }
    if (ev->parsed()) {
      print_config(threads, ev, 0);
      eval_sw.apply(eicfg);
      ecfg.threads = threads;
      return cmd_eval(pred, gt, ecfg, eicfg, csv, pr_dump);
    }
    if (ex->parsed()) {
      print_config(threads, ex, 0);
      return cmd_export(ex_wf, ex_obj, ex_model, ex_cloud, ex_features, threads);
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help() << std::flush;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}

}  // namespace pc2wf
