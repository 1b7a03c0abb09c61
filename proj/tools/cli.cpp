#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "smart_tree/eval.hpp"
#include "smart_tree/io.hpp"
#include "smart_tree/skeletonize.hpp"
#include "smart_tree/synth.hpp"

namespace smart_tree {

namespace {

// splitmix64 step: independent RNG streams for the stages of one tree
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct GenerateOptions {
  TreeParams tree;
  AugmentParams augment;
  double density = 40000.0;
};

struct SkeletonizeOptions {
  SkeletonizeConfig config;
  std::string estimator = "oracle";
  int k = 16;
  int iterations = 8;
};

struct EvaluateOptions {
  double spacing = 0.001;
  int steps = 101;
  double prune_radius = 0.01;
  double prune_length = 0.10;
};

void add_generate_flags(CLI::App& app, GenerateOptions& o) {
  auto& t = o.tree;
  auto& a = o.augment;
  app.add_option("--depth", t.depth, "Branching generations")->capture_default_str();
  app.add_option("--trunk-length", t.trunk_length, "Trunk length (m)")->capture_default_str();
  app.add_option("--trunk-radius", t.trunk_radius, "Trunk base radius (m)")->capture_default_str();
  app.add_option("--length-decay", t.length_decay, "Child/parent length ratio")->capture_default_str();
  app.add_option("--radius-decay", t.radius_decay, "Child/parent radius ratio and per-branch taper")
      ->capture_default_str();
  app.add_option("--angle-min", t.angle_min, "Minimum branching angle (rad)")->capture_default_str();
  app.add_option("--angle-max", t.angle_max, "Maximum branching angle (rad)")->capture_default_str();
  app.add_option("--children-min", t.children_min, "Minimum children per branch")->capture_default_str();
  app.add_option("--children-max", t.children_max, "Maximum children per branch")->capture_default_str();
  app.add_option("--seed", t.seed, "Random seed")->capture_default_str();
  app.add_option("--density", o.density, "Surface samples per square meter")->capture_default_str();
  app.add_option("--noise", a.noise_sigma, "Gaussian jitter sigma (m)")->capture_default_str();
  app.add_option("--dropout", a.dropout_prob, "Per-point drop probability")->capture_default_str();
  app.add_option("--occlusions", a.occlusion_count, "Number of occluding spheres")->capture_default_str();
  app.add_option("--occlusion-radius", a.occlusion_radius, "Occluding sphere radius (m)")
      ->capture_default_str();
}

void add_skeletonize_flags(CLI::App& app, SkeletonizeOptions& o) {
  auto& c = o.config;
  app.add_option("--estimator", o.estimator,
                 "Medial field source: oracle (labels), baseline (geometric) or field "
                 "(pred_* properties of the input)")
      ->check(CLI::IsMember({"oracle", "baseline", "field"}))
      ->capture_default_str();
  static const std::map<std::string, AdmissionRule> rules = {
      {"min", AdmissionRule::Min}, {"max", AdmissionRule::Max}, {"source", AdmissionRule::Source}};
  app.add_option("--admission", c.admission, "Edge admission radius: min, max or source")
      ->transform(CLI::CheckedTransformer(rules))
      ->default_str("min");
  app.add_option("--allocation-factor", c.allocation_factor, "Scale of the allocation radius")
      ->capture_default_str();
  app.add_option("--min-subgraph", c.min_subgraph_points, "Smallest component kept")
      ->capture_default_str();
  app.add_option("--min-path-nodes", c.min_path_nodes, "Shortest path emitted as a branch")
      ->capture_default_str();
  app.add_option("--voxel", c.voxel_resolution, "Downsampling resolution (m), 0 disables")
      ->capture_default_str();
  app.add_option("--k", o.k, "Neighborhood size of the baseline estimator")->capture_default_str();
  app.add_option("--iterations", o.iterations, "Ball-shrinking rounds of the baseline estimator")
      ->capture_default_str();
}

void add_evaluate_flags(CLI::App& app, EvaluateOptions& o) {
  app.add_option("--spacing", o.spacing, "Skeleton resampling step (m)")->capture_default_str();
  app.add_option("--steps", o.steps, "Threshold count over t in [0, 1]")->capture_default_str();
  app.add_option("--prune-radius", o.prune_radius, "Drop ground-truth branches thinner than this (m)")
      ->capture_default_str();
  app.add_option("--prune-length", o.prune_length, "Drop ground-truth branches shorter than this (m)")
      ->capture_default_str();
}

nlohmann::json tree_meta(const GenerateOptions& o) {
  const auto& t = o.tree;
  const auto& a = o.augment;
  return {{"generator", "smart-tree generate"},
          {"seed", t.seed},
          {"params",
           {{"depth", t.depth},
            {"trunk_length", t.trunk_length},
            {"trunk_radius", t.trunk_radius},
            {"length_decay", t.length_decay},
            {"radius_decay", t.radius_decay},
            {"angle_min", t.angle_min},
            {"angle_max", t.angle_max},
            {"children_min", t.children_min},
            {"children_max", t.children_max},
            {"density", o.density},
            {"noise_sigma", a.noise_sigma},
            {"dropout_prob", a.dropout_prob},
            {"occlusion_count", a.occlusion_count},
            {"occlusion_radius", a.occlusion_radius}}}};
}

nlohmann::json skeletonize_meta(const SkeletonizeOptions& o) {
  const auto& c = o.config;
  const char* rule = c.admission == AdmissionRule::Min   ? "min"
                     : c.admission == AdmissionRule::Max ? "max"
                                                         : "source";
  nlohmann::json params = {{"estimator", o.estimator},
                           {"admission", rule},
                           {"allocation_factor", c.allocation_factor},
                           {"min_subgraph_points", c.min_subgraph_points},
                           {"min_path_nodes", c.min_path_nodes},
                           {"voxel", c.voxel_resolution}};
  if (o.estimator == "baseline") {
    params["k"] = o.k;
    params["iterations"] = o.iterations;
  }
  return {{"generator", "smart-tree skeletonize"}, {"seed", nullptr}, {"params", params}};
}

struct GeneratedTree {
  Skeleton skeleton;
  PointCloud cloud;
};

GeneratedTree run_generate(GenerateOptions o) {
  const std::uint64_t seed = o.tree.seed;
  o.tree.seed = derive_seed(seed, 0);
  GeneratedTree g;
  g.skeleton = generate_skeleton(o.tree);
  g.cloud = sample_surface(g.skeleton, o.density, derive_seed(seed, 1));
  o.augment.seed = derive_seed(seed, 2);
  g.cloud = augment(g.cloud, o.augment);
  return g;
}

SkeletonizeResult run_skeletonize(const CloudFile& input, const SkeletonizeOptions& o) {
  SkeletonizeConfig config = o.config;
  if (o.estimator == "oracle") return skeletonize(input.cloud, oracle_estimate, config);
  if (o.estimator == "baseline") {
    const int k = o.k, iterations = o.iterations;
    return skeletonize(
        input.cloud, [=](const PointCloud& c) { return baseline_estimate(c, k, iterations); },
        config);
  }
  if (!input.field) throw InvalidInput("--estimator field needs pred_* properties in the cloud");
  if (config.voxel_resolution > 0.0) {
    MedialField field = voxel_downsample_field(input.cloud, *input.field, config.voxel_resolution);
    PointCloud cloud = voxel_downsample(input.cloud, config.voxel_resolution);
    config.voxel_resolution = 0.0;
    return skeletonize(cloud, injected_estimator(std::move(field)), config);
  }
  return skeletonize(input.cloud, injected_estimator(*input.field), config);
}

void print_diagnostics(std::ostream& out, const SkeletonizeDiagnostics& d) {
  out << "points " << d.input_points << " -> " << d.downsampled_points << " after downsampling\n"
      << "edges " << d.edge_count << ", sub-graphs " << d.component_count << ", residue "
      << d.residue_size << ", trees " << d.tree_count << "\n"
      << std::fixed << std::setprecision(1) << "timings ms: downsample " << d.downsample_ms
      << ", estimate " << d.estimate_ms << ", project " << d.project_ms << ", graph "
      << d.graph_ms << ", extract " << d.extract_ms << "\n"
      << std::defaultfloat;
}

nlohmann::json diagnostics_json(const SkeletonizeDiagnostics& d) {
  return {{"input_points", d.input_points},   {"downsampled_points", d.downsampled_points},
          {"edge_count", d.edge_count},       {"component_count", d.component_count},
          {"residue_size", d.residue_size},   {"tree_count", d.tree_count}};
}

EvalReport run_evaluate(const Skeleton& gt, const Skeleton& pred, const EvaluateOptions& o) {
  const auto pruned = prune_ground_truth(gt, PointCloud{}, o.prune_radius, o.prune_length).first;
  const auto gt_samples = resample_skeleton(pruned, o.spacing);
  const auto pred_samples = resample_skeleton(pred, o.spacing);
  if (gt_samples.empty()) throw InvalidInput("ground-truth skeleton is empty after pruning");
  if (pred_samples.empty()) throw InvalidInput("predicted skeleton is empty");
  return sweep_and_auc(pred_samples, gt_samples, o.steps);
}

void write_report(const EvalReport& report, const std::string& csv, const std::string& plot,
                  std::ostream& out) {
  std::ostringstream text;
  write_report_csv(text, report);
  if (csv.empty()) {
    out << text.str();
  } else {
    write_file(csv, text.str());
  }
  if (!plot.empty()) {
    std::ostringstream svg;
    write_report_svg(svg, report);
    write_file(plot, svg.str());
  }
}

void print_auc(std::ostream& out, const EvalReport& r) {
  out << std::fixed << std::setprecision(4) << "precision AUC " << r.precision_auc
      << ", recall AUC " << r.recall_auc << ", F1 AUC " << r.f1_auc << "\n"
      << std::defaultfloat;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tree point-cloud skeletonization from per-point medial predictions", "smart-tree"};
  app.require_subcommand(1);

  GenerateOptions gen;
  std::string gen_skeleton, gen_cloud;
  bool gen_ascii = false;
  auto* generate = app.add_subcommand("generate", "Generate a labelled synthetic tree");
  add_generate_flags(*generate, gen);
  generate->add_option("-o,--skeleton", gen_skeleton, "Ground-truth skeleton JSON")->required();
  generate->add_option("-c,--cloud", gen_cloud, "Labelled cloud PLY")->required();
  generate->add_flag("--ascii", gen_ascii, "Write ascii PLY instead of binary");

  SkeletonizeOptions skel;
  std::string skel_input, skel_output, skel_diag;
  auto* skeletonize_cmd = app.add_subcommand("skeletonize", "Extract a skeleton from a cloud");
  skeletonize_cmd->add_option("cloud", skel_input, "Input PLY")->required()->check(CLI::ExistingFile);
  add_skeletonize_flags(*skeletonize_cmd, skel);
  skeletonize_cmd->add_option("-o,--output", skel_output, "Output skeleton JSON")->required();
  skeletonize_cmd->add_option("--diagnostics", skel_diag, "Write run counters as JSON");

  EvaluateOptions eval;
  std::string eval_gt, eval_pred, eval_csv, eval_plot;
  auto* evaluate = app.add_subcommand("evaluate", "Score a skeleton against ground truth");
  evaluate->add_option("--gt", eval_gt, "Ground-truth skeleton JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--pred", eval_pred, "Predicted skeleton JSON")->required()->check(CLI::ExistingFile);
  add_evaluate_flags(*evaluate, eval);
  evaluate->add_option("-o,--output", eval_csv, "CSV report (default: stdout)");
  evaluate->add_option("--plot", eval_plot, "SVG plot of the curves");

  GenerateOptions pipe_gen;
  SkeletonizeOptions pipe_skel;
  EvaluateOptions pipe_eval;
  std::string pipe_dir = "pipeline_out", pipe_plot;
  auto* pipeline = app.add_subcommand("pipeline", "generate -> skeletonize -> evaluate");
  add_generate_flags(*pipeline, pipe_gen);
  add_skeletonize_flags(*pipeline, pipe_skel);
  add_evaluate_flags(*pipeline, pipe_eval);
  pipeline->add_option("--out-dir", pipe_dir, "Directory for all artifacts")->capture_default_str();
  pipeline->add_option("--plot", pipe_plot, "SVG plot of the curves");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (generate->parsed()) {
      const auto tree = run_generate(gen);
      write_skeleton(gen_skeleton, tree.skeleton, tree_meta(gen));
      write_cloud(gen_cloud, tree.cloud, nullptr,
                  gen_ascii ? PlyFormat::Ascii : PlyFormat::BinaryLittleEndian);
      out << "wrote " << tree.skeleton.nodes.size() << " nodes to " << gen_skeleton << " and "
          << tree.cloud.size() << " points to " << gen_cloud << "\n";
    } else if (skeletonize_cmd->parsed()) {
      const CloudFile input = read_cloud(skel_input);
      const auto result = run_skeletonize(input, skel);
      write_skeleton(skel_output, result.skeleton, skeletonize_meta(skel));
      if (!skel_diag.empty()) write_file(skel_diag, diagnostics_json(result.diagnostics).dump(1) + "\n");
      print_diagnostics(out, result.diagnostics);
    } else if (evaluate->parsed()) {
      const auto gt = read_skeleton(eval_gt).skeleton;
      const auto pred = read_skeleton(eval_pred).skeleton;
      const auto report = run_evaluate(gt, pred, eval);
      write_report(report, eval_csv, eval_plot, out);
      if (!eval_csv.empty()) print_auc(out, report);
    } else if (pipeline->parsed()) {
      const std::filesystem::path dir = pipe_dir;
      std::filesystem::create_directories(dir);
      auto tree = run_generate(pipe_gen);
      auto [gt, cloud] = prune_ground_truth(tree.skeleton, tree.cloud, pipe_eval.prune_radius,
                                            pipe_eval.prune_length);
      if (cloud.empty()) throw InvalidInput("no points left after pruning the ground truth");
      write_skeleton(dir / "gt.json", gt, tree_meta(pipe_gen));
      write_cloud(dir / "cloud.ply", cloud);

      const auto result = run_skeletonize(CloudFile{cloud, std::nullopt}, pipe_skel);
      write_skeleton(dir / "skeleton.json", result.skeleton, skeletonize_meta(pipe_skel));
      write_file(dir / "diagnostics.json", diagnostics_json(result.diagnostics).dump(1) + "\n");
      print_diagnostics(out, result.diagnostics);

      EvaluateOptions already_pruned = pipe_eval;
      already_pruned.prune_radius = 0.0;
      already_pruned.prune_length = 0.0;
      const auto report = run_evaluate(gt, result.skeleton, already_pruned);
      write_report(report, (dir / "report.csv").string(), pipe_plot, out);
      print_auc(out, report);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace smart_tree
