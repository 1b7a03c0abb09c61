#include "smart_tree/eval.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <unordered_map>

#include <tbb/parallel_for.h>

#include "smart_tree/kdtree.hpp"

namespace smart_tree {

namespace {

void check_samples(const SkeletonSamples& output, const SkeletonSamples& gt) {
  if (output.empty() || gt.empty()) throw InvalidInput("evaluation needs non-empty sample sets");
  if (output.radii.size() != output.size() || gt.radii.size() != gt.size()) {
    throw InvalidInput("sample radii do not match positions");
  }
  for (double r : gt.radii) {
    if (!(r > 0.0)) throw InvalidInput("ground-truth sample radius must be positive");
  }
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

SkeletonSamples resample_skeleton(const Skeleton& skeleton, double spacing) {
  if (!(spacing > 0.0)) throw InvalidInput("sampling spacing must be positive");
  SkeletonSamples out;
  std::unordered_map<NodeId, std::size_t> index;
  for (std::size_t i = 0; i < skeleton.nodes.size(); ++i) {
    index.emplace(skeleton.nodes[i].id, i);
    out.positions.push_back(skeleton.nodes[i].position);
    out.radii.push_back(skeleton.nodes[i].radius);
  }
  for (const auto& child : skeleton.nodes) {
    if (!child.parent) continue;
    auto it = index.find(*child.parent);
    if (it == index.end()) throw InvalidInput("skeleton node references a missing parent");
    const auto& parent = skeleton.nodes[it->second];
    const double length = distance(parent.position, child.position);
    // tolerance keeps exact multiples (0.01 / 0.001) from gaining an interval
    const auto intervals =
        static_cast<std::size_t>(std::max(1.0, std::ceil(length / spacing - 1e-9)));
    for (std::size_t k = 1; k < intervals; ++k) {
      const double s = static_cast<double>(k) / static_cast<double>(intervals);
      out.positions.push_back(parent.position + s * (child.position - parent.position));
      out.radii.push_back(parent.radius + s * (child.radius - parent.radius));
    }
  }
  return out;
}

std::vector<Match> precision_matches(const SkeletonSamples& output, const SkeletonSamples& gt) {
  check_samples(output, gt);
  const KdTree tree(gt.positions, gt.radii);
  std::vector<Match> matches(output.size());
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, output.size(), 512), [&](const auto& r) {
    for (std::size_t i = r.begin(); i != r.end(); ++i) {
      const auto nb = tree.nearest_scaled(output.positions[i]);
      matches[i] = {nb.index, nb.distance, gt.radii[nb.index]};
    }
  });
  return matches;
}

std::vector<Match> recall_matches(const SkeletonSamples& output, const SkeletonSamples& gt) {
  check_samples(output, gt);
  const KdTree tree(output.positions);
  std::vector<Match> matches(gt.size());
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, gt.size(), 512), [&](const auto& r) {
    for (std::size_t j = r.begin(); j != r.end(); ++j) {
      const auto nb = tree.nearest(gt.positions[j]);
      matches[j] = {nb.index, nb.distance, gt.radii[j]};
    }
  });
  return matches;
}

double matched_percent(const std::vector<Match>& matches, double t) {
  if (matches.empty()) throw InvalidInput("no matches to score");
  std::size_t hit = 0;
  for (const auto& m : matches) {
    if (m.distance < t * m.gt_radius) ++hit;
  }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(matches.size());
}

double precision(const SkeletonSamples& output, const SkeletonSamples& gt, double t) {
  if (!(t >= 0.0)) throw InvalidInput("threshold must be >= 0");
  return matched_percent(precision_matches(output, gt), t);
}

double recall(const SkeletonSamples& output, const SkeletonSamples& gt, double t) {
  if (!(t >= 0.0)) throw InvalidInput("threshold must be >= 0");
  return matched_percent(recall_matches(output, gt), t);
}

double f1(double p, double r) {
  if (p + r <= 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double auc(const std::vector<double>& thresholds, const std::vector<double>& values) {
  double area = 0.0;
  for (std::size_t k = 1; k < thresholds.size(); ++k) {
    area += 0.5 * (values[k] + values[k - 1]) * (thresholds[k] - thresholds[k - 1]);
  }
  return area / 100.0;
}

EvalReport sweep_and_auc(const SkeletonSamples& output, const SkeletonSamples& gt, int steps) {
  if (steps < 2) throw InvalidInput("threshold sweep needs at least 2 steps");
  const auto pm = precision_matches(output, gt);
  const auto rm = recall_matches(output, gt);

  EvalReport report;
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / (steps - 1);
    const double p = matched_percent(pm, t);
    const double r = matched_percent(rm, t);
    report.thresholds.push_back(t);
    report.precision.push_back(p);
    report.recall.push_back(r);
    report.f1.push_back(f1(p, r));
  }
  report.precision_auc = auc(report.thresholds, report.precision);
  report.recall_auc = auc(report.thresholds, report.recall);
  report.f1_auc = auc(report.thresholds, report.f1);
  return report;
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "t,precision,recall,f1\n";
  for (std::size_t k = 0; k < report.thresholds.size(); ++k) {
    out << shortest(report.thresholds[k]) << ',' << shortest(report.precision[k]) << ','
        << shortest(report.recall[k]) << ',' << shortest(report.f1[k]) << '\n';
  }
}

void write_report_svg(std::ostream& out, const EvalReport& report) {
  constexpr double width = 480, height = 320, margin = 40;
  const double plot_w = width - 2 * margin, plot_h = height - 2 * margin;
  auto x = [&](double t) { return margin + t * plot_w; };
  auto y = [&](double percent) { return height - margin - percent / 100.0 * plot_h; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot_w
      << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double f = tick / 4.0;
    out << "<text x=\"" << x(f) << "\" y=\"" << height - margin + 15
        << "\" text-anchor=\"middle\">" << shortest(f) << "</text>\n";
    out << "<text x=\"" << margin - 5 << "\" y=\"" << y(100 * f) + 4
        << "\" text-anchor=\"end\">" << 100 * tick / 4 << "</text>\n";
  }
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 5
      << "\" text-anchor=\"middle\">threshold t (fraction of radius)</text>\n";

  struct Curve {
    const std::vector<double>* values;
    const char* color;
    const char* name;
  };
  const Curve curves[] = {{&report.precision, "#1f77b4", "precision"},
                          {&report.recall, "#d62728", "recall"},
                          {&report.f1, "#2ca02c", "f1"}};
  int row = 0;
  for (const auto& c : curves) {
    out << "<polyline fill=\"none\" stroke=\"" << c.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < report.thresholds.size(); ++k) {
      out << (k ? " " : "") << x(report.thresholds[k]) << ',' << y((*c.values)[k]);
    }
    out << "\"/>\n";
    out << "<text x=\"" << margin + 8 << "\" y=\"" << margin + 15 + 14 * row++ << "\" fill=\""
        << c.color << "\">" << c.name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace smart_tree
