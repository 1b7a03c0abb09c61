// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <tbb/global_control.h>

#include "cli.hpp"
#include "smart_tree/estimate.hpp"
#include "smart_tree/eval.hpp"
#include "smart_tree/io.hpp"
#include "smart_tree/skeletonize.hpp"
#include "smart_tree/synth.hpp"
#include "support.hpp"

namespace st = smart_tree;
using st::Point3;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "smart-tree");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = st::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

struct Curves {
  std::vector<double> t, precision, recall, f1;
};

Curves read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  if (line != "t,precision,recall,f1") throw std::runtime_error("unexpected CSV header: " + line);
  Curves c;
  while (std::getline(in, line)) {
    double v[4];
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3]) != 4) {
      throw std::runtime_error("malformed CSV row: " + line);
    }
    c.t.push_back(v[0]);
    c.precision.push_back(v[1]);
    c.recall.push_back(v[2]);
    c.f1.push_back(v[3]);
  }
  return c;
}

// area under a percent curve, as a fraction
double trapezoid(const std::vector<double>& t, const std::vector<double>& y) {
  double area = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) area += (t[k] - t[k - 1]) * (y[k] + y[k - 1]) / 2.0;
  return area / 100.0;
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

Outcome criterion_clean_pipeline() {
  Outcome o;
  const auto start = Clock::now();
  double worst_p = 1.0, worst_r = 1.0;
  for (int seed = 1; seed <= 10; ++seed) {
    const auto dir = st::testing::scratch_dir("accept_clean_" + std::to_string(seed));
    const std::string depth = std::to_string(seed % 2 ? 3 : 4);
    if (cli({"pipeline", "--depth", depth, "--seed", std::to_string(seed), "--out-dir", dir.string()}) != 0) {
      return {false, "pipeline failed for seed " + std::to_string(seed)};
    }
    const auto c = read_csv(dir / "report.csv");
    const double p = trapezoid(c.t, c.precision), r = trapezoid(c.t, c.recall);
    worst_p = std::min(worst_p, p);
    worst_r = std::min(worst_r, r);
    if (p < 0.95 || r < 0.90) o.pass = false;
  }
  const double elapsed = seconds_since(start);
  if (elapsed >= 30.0) o.pass = false;
  std::ostringstream s;
  s << "10 seeds, depth 3-4: min precision AUC " << worst_p << " (>= 0.95), min recall AUC "
    << worst_r << " (>= 0.90), total " << elapsed << " s (< 30)";
  o.detail = s.str();
  return o;
}

Outcome criterion_augmented_pipeline() {
  Outcome o;
  double worst_f1 = 1.0;
  for (int seed = 1; seed <= 10; ++seed) {
    const auto dir = st::testing::scratch_dir("accept_aug_" + std::to_string(seed));
    if (cli({"pipeline", "--depth", "3", "--seed", std::to_string(seed), "--noise", "0.002",
             "--dropout", "0.05", "--occlusions", "2", "--out-dir", dir.string()}) != 0) {
      return {false, "pipeline failed for seed " + std::to_string(seed)};
    }
    const auto c = read_csv(dir / "report.csv");
    const double f = trapezoid(c.t, c.f1);
    worst_f1 = std::min(worst_f1, f);
    if (f < 0.75) o.pass = false;
  }

  // a sphere centred on the trunk axis, wider than the trunk, cuts it in two
  std::size_t min_components = SIZE_MAX;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    st::TreeParams p;
    p.seed = seed;
    const auto skeleton = st::generate_skeleton(p);
    st::AugmentParams a;
    a.noise_sigma = 0.002;
    a.dropout_prob = 0.05;
    a.seed = seed;
    a.occlusion_radius = 0.15;
    a.occlusion_centers = {Point3(0, 0, 0.3)};
    const auto cloud = st::augment(st::sample_surface(skeleton, 40000.0, seed), a);
    const auto result = st::skeletonize(cloud, st::oracle_estimate, st::SkeletonizeConfig{});
    min_components = std::min(min_components, result.diagnostics.component_count);
    if (result.diagnostics.component_count < 2 || result.skeleton.roots.size() < 2) o.pass = false;
  }
  std::ostringstream s;
  s << "10 seeds: min F1 AUC " << worst_f1 << " (>= 0.75); severed trunk: min sub-graphs "
    << min_components << " (>= 2)";
  o.detail = s.str();
  return o;
}

Outcome criterion_metric_identities() {
  Outcome o;
  double worst_dev = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    st::TreeParams p;
    p.seed = seed;
    p.depth = static_cast<int>(seed % 5);
    const auto samples = st::resample_skeleton(st::generate_skeleton(p), 0.001);
    const auto r = st::sweep_and_auc(samples, samples, 101);
    for (std::size_t k = 1; k < r.thresholds.size(); ++k) {
      if (r.precision[k] != 100.0 || r.recall[k] != 100.0 || r.f1[k] != 100.0) o.pass = false;
    }
    for (double a : {r.precision_auc, r.recall_auc, r.f1_auc}) {
      worst_dev = std::max(worst_dev, std::fabs(a - 0.995));
    }
  }
  if (worst_dev > 1e-9) o.pass = false;
  std::ostringstream s;
  s << "10 self-evaluations: curves 100 for t > 0, max |AUC - 0.995| = " << worst_dev << " (<= 1e-9)";
  o.detail = s.str();
  return o;
}

Outcome criterion_brute_force() {
  std::mt19937_64 rng(2024);
  int graph_ok = 0, sssp_ok = 0, comp_ok = 0, match_ok = 0;
  const int instances = 50;
  const st::AdmissionRule rules[] = {st::AdmissionRule::Min, st::AdmissionRule::Max,
                                     st::AdmissionRule::Source};

  for (int trial = 0; trial < instances; ++trial) {
    // neighbor graph
    std::vector<Point3> pts;
    std::vector<double> radii;
    std::uniform_real_distribution<double> rad(0.02, 0.2);
    for (int i = 0; i < 400; ++i) {
      pts.push_back(st::testing::random_point(rng, 0.5));
      radii.push_back(rad(rng));
    }
    const auto rule = rules[trial % 3];
    const auto g = st::build_neighbor_graph(pts, radii, rule);
    bool same = true;
    for (std::size_t i = 0; i < pts.size() && same; ++i) {
      std::vector<std::uint32_t> expect;
      std::vector<double> weights;
      for (std::size_t j = 0; j < pts.size(); ++j) {
        const double d = (pts[i] - pts[j]).norm();
        const bool in = rule == st::AdmissionRule::Min ? d < std::min(radii[i], radii[j])
                                                       : d < radii[i] || d < radii[j];
        if (i != j && in) {
          expect.push_back(static_cast<std::uint32_t>(j));
          weights.push_back(d);
        }
      }
      const auto nb = g.neighbors(i);
      const auto w = g.edge_weights(i);
      same = std::equal(nb.begin(), nb.end(), expect.begin(), expect.end()) &&
             std::equal(w.begin(), w.end(), weights.begin(), weights.end());
    }
    graph_ok += same;

    // components against union-find over the same graph
    std::vector<std::size_t> parent(pts.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
      return parent[x] == x ? x : parent[x] = find(parent[x]);
    };
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::uint32_t j : g.neighbors(i)) parent[find(i)] = find(j);
    }
    std::map<std::size_t, st::Component> groups;
    for (std::uint32_t i = 0; i < pts.size(); ++i) groups[find(i)].push_back(i);
    std::vector<st::Component> expect;
    for (auto& [root, members] : groups) expect.push_back(members);
    std::sort(expect.begin(), expect.end(), [](const auto& a, const auto& b) {
      return a.size() != b.size() ? a.size() > b.size() : a.front() < b.front();
    });
    const auto comps = st::connected_components(g, 1);
    comp_ok += comps.kept == expect && comps.residue.empty();

    // shortest paths on the largest component
    const auto& comp = comps.kept.front();
    const auto root = st::select_root(comp, g.positions);
    const auto sp = st::sssp(g, comp, root);
    std::vector<double> bf(pts.size(), INFINITY);
    bf[root] = 0.0;
    for (std::size_t round = 0; round < comp.size(); ++round) {
      bool changed = false;
      for (std::uint32_t u : comp) {
        const auto nb = g.neighbors(u);
        const auto w = g.edge_weights(u);
        for (std::size_t k = 0; k < nb.size(); ++k) {
          if (bf[u] + w[k] < bf[nb[k]]) {
            bf[nb[k]] = bf[u] + w[k];
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    bool close = true;
    for (std::size_t v = 0; v < pts.size(); ++v) {
      if (std::isinf(bf[v]) != std::isinf(sp.distance[v])) close = false;
      else if (!std::isinf(bf[v]) && std::fabs(bf[v] - sp.distance[v]) > 1e-9) close = false;
    }
    sssp_ok += close;

    // metric nearest-neighbor assignments
    st::SkeletonSamples out, gt;
    std::uniform_real_distribution<double> sr(0.005, 0.1);
    for (int i = 0; i < 300; ++i) {
      out.positions.push_back(st::testing::random_point(rng, 0.5));
      out.radii.push_back(sr(rng));
    }
    for (int i = 0; i < 200; ++i) {
      gt.positions.push_back(st::testing::random_point(rng, 0.5));
      gt.radii.push_back(sr(rng));
    }
    const auto pm = st::precision_matches(out, gt);
    const auto rm = st::recall_matches(out, gt);
    bool match = true;
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < gt.size(); ++j) {
        if ((out.positions[i] - gt.positions[j]).norm() / gt.radii[j] <
            (out.positions[i] - gt.positions[best]).norm() / gt.radii[best])
          best = j;
      }
      match = match && pm[i].index == best;
    }
    for (std::size_t j = 0; j < gt.size(); ++j) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < out.size(); ++i) {
        if ((gt.positions[j] - out.positions[i]).norm() < (gt.positions[j] - out.positions[best]).norm())
          best = i;
      }
      match = match && rm[j].index == best;
    }
    match_ok += match;
  }
  Outcome o;
  o.pass = graph_ok == instances && sssp_ok == instances && comp_ok == instances && match_ok == instances;
  std::ostringstream s;
  s << "exact agreement on " << instances << " instances each: graph " << graph_ok << ", SSSP "
    << sssp_ok << ", components " << comp_ok << ", metric matches " << match_ok;
  o.detail = s.str();
  return o;
}

Outcome criterion_losses() {
  Outcome o;
  st::TreeParams p;
  p.seed = 5;
  const auto cloud = st::sample_surface(st::generate_skeleton(p), 5000.0, 5);
  const auto oracle = st::total_loss(st::oracle_estimate(cloud), *cloud.labels);

  const Eigen::Vector3d x = Eigen::Vector3d::UnitX(), y = Eigen::Vector3d::UnitY();
  const std::vector<st::GroundTruthLabel> gt = {{std::numbers::e, x, 0}};
  auto dir_loss = [&](const Eigen::Vector3d& d) {
    return st::direction_loss(st::MedialField{{1.0}, {d}}, gt);
  };
  const double parallel = dir_loss(x), orthogonal = dir_loss(y), anti = dir_loss(-x);
  const double radius = st::radius_loss(st::MedialField{{0.0}, {x}}, gt);

  o.pass = oracle.total_loss == 0.0 && std::fabs(parallel) <= 1e-12 &&
           std::fabs(orthogonal - 1.0) <= 1e-12 && std::fabs(anti - 2.0) <= 1e-12 &&
           std::fabs(radius - 1.0) <= 1e-12;
  std::ostringstream s;
  s << "oracle total " << oracle.total_loss << " on " << cloud.size()
    << " points; direction 0/1/2 -> " << parallel << "/" << orthogonal << "/" << anti
    << "; radius(gt e, pred 0) -> " << radius;
  o.detail = s.str();
  return o;
}

Outcome criterion_determinism() {
  auto run_all = [](const std::filesystem::path& dir) {
    const std::string d = dir.string();
    int rc = 0;
    rc |= cli({"generate", "--depth", "3", "--seed", "11", "--noise", "0.002", "--dropout", "0.05",
               "--occlusions", "2", "-o", d + "/tree.json", "-c", d + "/cloud.ply"});
    rc |= cli({"skeletonize", d + "/cloud.ply", "--estimator", "oracle", "-o", d + "/oracle.json",
               "--diagnostics", d + "/oracle_diag.json"});
    rc |= cli({"skeletonize", d + "/cloud.ply", "--estimator", "baseline", "--admission", "max",
               "-o", d + "/baseline.json"});
    rc |= cli({"evaluate", "--gt", d + "/tree.json", "--pred", d + "/oracle.json", "-o",
               d + "/report.csv", "--plot", d + "/report.svg"});
    rc |= cli({"pipeline", "--depth", "3", "--seed", "7", "--noise", "0.002", "--out-dir",
               d + "/pipeline", "--plot", d + "/pipeline.svg"});
    return rc;
  };
  const auto a = st::testing::scratch_dir("accept_det_a");
  const auto b = st::testing::scratch_dir("accept_det_b");
  if (run_all(a) != 0) return {false, "CLI run failed"};
  {
    tbb::global_control one(tbb::global_control::max_allowed_parallelism, 1);
    if (run_all(b) != 0) return {false, "single-threaded CLI run failed"};
  }
  std::size_t files = 0, differing = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a);
    ++files;
    if (!std::filesystem::exists(b / rel) || st::read_file(entry.path()) != st::read_file(b / rel)) {
      ++differing;
    }
  }
  Outcome o;
  o.pass = files >= 12 && differing == 0;
  o.detail = std::to_string(files) + " files from generate/skeletonize/evaluate/pipeline, default vs 1 thread: " +
             std::to_string(differing) + " differ";
  return o;
}

Outcome criterion_cylinder() {
  Outcome o;
  double worst_axis = 0.0, worst_radius = 0.0;
  struct Case {
    double radius, length;
    std::uint64_t seed;
  };
  for (const Case c : {Case{0.1, 1.0, 1}, Case{0.05, 2.0, 2}, Case{0.2, 1.5, 3}, Case{0.03, 1.0, 4}}) {
    const auto cloud = st::testing::cylinder_cloud(c.radius, c.length, 40000.0, c.seed);
    const auto result = st::skeletonize(cloud, st::oracle_estimate, st::SkeletonizeConfig{});
    if (result.skeleton.nodes.size() < 2) o.pass = false;
    for (const auto& n : result.skeleton.nodes) {
      worst_axis = std::max(worst_axis, st::testing::segment_distance(n.position, Point3::Zero(),
                                                                      Point3(0, 0, c.length)));
      worst_radius = std::max(worst_radius, std::fabs(n.radius - c.radius));
    }
  }
  if (worst_axis >= 1e-3 || worst_radius >= 1e-3) o.pass = false;
  std::ostringstream s;
  s << "4 cylinders: max node-axis distance " << worst_axis << " m, max radius error "
    << worst_radius << " m (both < 1e-3)";
  o.detail = s.str();
  return o;
}

Outcome criterion_scale() {
  st::TreeParams p;
  p.depth = 5;
  p.trunk_length = 5.0;
  p.trunk_radius = 0.09;
  p.children_max = 4;
  p.seed = 3;
  const auto cloud = st::sample_surface(st::generate_skeleton(p), 40000.0, 3);
  const auto start = Clock::now();
  const auto result = st::skeletonize(cloud, st::oracle_estimate, st::SkeletonizeConfig{});
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = result.diagnostics.downsampled_points >= 100000 && elapsed < 10.0 &&
           st::skeleton_validate(result.skeleton).empty();
  std::ostringstream s;
  s << cloud.size() << " points -> " << result.diagnostics.downsampled_points
    << " after downsampling (>= 100000), " << result.diagnostics.edge_count << " edges, "
    << elapsed << " s (< 10)";
  o.detail = s.str();
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle pipeline, clean trees", criterion_clean_pipeline},
      {"oracle pipeline, augmented trees", criterion_augmented_pipeline},
      {"metric identities", criterion_metric_identities},
      {"brute-force equivalence", criterion_brute_force},
      {"loss correctness", criterion_losses},
      {"CLI determinism", criterion_determinism},
      {"cylinder ground truth", criterion_cylinder},
      {"scale", criterion_scale},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << "\n";
  return failed ? 1 : 0;
}
