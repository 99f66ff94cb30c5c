#include "core/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <tuple>

#include "core/errors.hpp"

namespace hahog {

namespace {

std::int64_t dist2(Point a, Point b) {
  const std::int64_t dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

std::string num(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : ""; }

}  // namespace

int nearest_annotation(const std::vector<Point>& annotations, Point p) {
  int best = -1;
  std::int64_t best_d = 0;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const std::int64_t d = dist2(annotations[i], p);
    if (best < 0 || d < best_d) {
      best = static_cast<int>(i);
      best_d = d;
    }
  }
  return best;
}

MatchResult match(const std::vector<Candidate>& detections, const std::vector<Point>& annotations,
                  double match_radius_mm, const Calibration& calib) {
  const double r_px = match_radius_mm / calib.scale_mm_per_px;
  struct Proposal {
    std::int64_t d2;
    int annotation;
    int detection;
  };
  std::vector<Proposal> props;
  MatchResult out;
  for (std::size_t k = 0; k < detections.size(); ++k) {
    const int a = nearest_annotation(annotations, detections[k].position);
    if (a < 0) continue;
    props.push_back({dist2(annotations[static_cast<std::size_t>(a)], detections[k].position), a, static_cast<int>(k)});
  }
  std::sort(props.begin(), props.end(), [](const Proposal& x, const Proposal& y) {
    return std::tie(x.d2, x.annotation, x.detection) < std::tie(y.d2, y.annotation, y.detection);
  });
  std::vector<char> ann_used(annotations.size(), 0), det_used(detections.size(), 0);
  for (const Proposal& p : props) {
    if (static_cast<double>(p.d2) > r_px * r_px || ann_used[static_cast<std::size_t>(p.annotation)]) continue;
    ann_used[static_cast<std::size_t>(p.annotation)] = 1;
    det_used[static_cast<std::size_t>(p.detection)] = 1;
    out.tp.push_back({p.detection, p.annotation, std::sqrt(static_cast<double>(p.d2))});
  }
  for (std::size_t k = 0; k < detections.size(); ++k)
    if (!det_used[k]) out.fp.push_back(static_cast<int>(k));
  for (std::size_t i = 0; i < annotations.size(); ++i)
    if (!ann_used[i]) out.fn.push_back(static_cast<int>(i));
  return out;
}

double density_from_distance(double r_nn_m) { return 1.0 / (std::numbers::pi * r_nn_m * r_nn_m); }
double distance_from_density(double rho) {
  return rho <= 0 ? std::numeric_limits<double>::infinity() : std::sqrt(1.0 / (std::numbers::pi * rho));
}

std::vector<DensityRecord> nn_density(const std::vector<Point>& annotations, const Calibration& calib) {
  std::vector<DensityRecord> out;
  if (annotations.size() < 2) return out;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (std::size_t j = 0; j < annotations.size(); ++j)
      if (j != i) best = std::min(best, dist2(annotations[i], annotations[j]));
    DensityRecord r;
    r.annotation = static_cast<int>(i);
    r.r_nn_m = std::sqrt(static_cast<double>(best)) * calib.scale_mm_per_px / 1000.0;
    r.rho = density_from_distance(r.r_nn_m);
    out.push_back(r);
  }
  return out;
}

std::vector<double> default_bin_edges() { return {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0}; }

std::optional<double> BinCounts::precision() const {
  if (tp + fp == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

std::optional<double> BinCounts::recall() const {
  if (tp + fn == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

std::optional<double> BinCounts::fscore() const {
  const auto p = precision(), r = recall();
  if (!p || !r) return std::nullopt;
  if (*p + *r == 0) return 0.0;
  return 2.0 * *p * *r / (*p + *r);
}

BinReport::BinReport(std::vector<double> edges_) : edges(std::move(edges_)) {
  if (edges.size() < 2) fail(ErrorCode::Config, "need at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) fail(ErrorCode::Config, "bin edges must be strictly increasing");
  bins.assign(edges.size() - 1, {});
}

int BinReport::bin_of(double rho) const {
  const int n = static_cast<int>(bins.size());
  for (int i = 0; i < n; ++i)
    if (rho <= edges[static_cast<std::size_t>(i) + 1]) return i;
  return n - 1;
}

BinReport& BinReport::operator+=(const BinReport& o) {
  if (o.edges != edges) fail(ErrorCode::Config, "cannot add reports with different bins");
  for (std::size_t i = 0; i < bins.size(); ++i) bins[i] += o.bins[i];
  return *this;
}

BinCounts BinReport::total() const {
  BinCounts c;
  for (const auto& b : bins) c += b;
  return c;
}

BinCounts BinReport::merged(double lo, double hi) const {
  BinCounts c;
  for (std::size_t i = 0; i < bins.size(); ++i)
    if (edges[i] >= lo && edges[i + 1] <= hi) c += bins[i];
  return c;
}

BinReport bin_and_score(const MatchResult& result, const std::vector<Candidate>& detections,
                        const std::vector<Point>& annotations, const std::vector<DensityRecord>& densities,
                        const std::vector<double>& edges) {
  BinReport rep(edges);
  std::vector<int> bin_of_ann(annotations.size(), 0);
  for (const DensityRecord& d : densities) bin_of_ann[static_cast<std::size_t>(d.annotation)] = rep.bin_of(d.rho);
  for (const MatchPair& m : result.tp) rep.bins[static_cast<std::size_t>(bin_of_ann[static_cast<std::size_t>(m.annotation)])].tp++;
  for (int a : result.fn) rep.bins[static_cast<std::size_t>(bin_of_ann[static_cast<std::size_t>(a)])].fn++;
  for (int k : result.fp) {
    const int a = nearest_annotation(annotations, detections[static_cast<std::size_t>(k)].position);
    rep.bins[static_cast<std::size_t>(a < 0 ? 0 : bin_of_ann[static_cast<std::size_t>(a)])].fp++;
  }
  return rep;
}

void EvalConfig::validate() const {
  if (!(match_radius_mm > 0)) fail(ErrorCode::Config, "match radius must be positive");
  BinReport check(edges);
}

BinReport evaluate_frame(const std::vector<Candidate>& detections, const std::vector<Point>& annotations,
                         const Calibration& calib, const EvalConfig& cfg) {
  const MatchResult m = match(detections, annotations, cfg.match_radius_mm, calib);
  return bin_and_score(m, detections, annotations, nn_density(annotations, calib), cfg.edges);
}

std::string report_csv(const std::vector<MethodReport>& reports, double match_radius_mm) {
  std::string out = "# match_radius_mm=" + num(match_radius_mm) + "\n";
  out += "bin_lo_rho,bin_hi_rho,bin_lo_rnn_m,bin_hi_rnn_m,tp,fp,fn,precision,recall,fscore,method\n";
  for (const auto& mr : reports) {
    const auto& r = mr.report;
    for (std::size_t i = 0; i < r.bins.size(); ++i) {
      const double lo = r.edges[i], hi = r.edges[i + 1];
      const BinCounts& b = r.bins[i];
      out += num(lo) + "," + num(hi) + "," + num(distance_from_density(hi)) + "," + num(distance_from_density(lo)) +
             "," + std::to_string(b.tp) + "," + std::to_string(b.fp) + "," + std::to_string(b.fn) + "," +
             opt(b.precision()) + "," + opt(b.recall()) + "," + opt(b.fscore()) + "," + mr.method + "\n";
    }
  }
  return out;
}

std::string report_plot_data(const std::vector<MethodReport>& reports) {
  std::string out = "# method rho_mid rnn_mid_m precision recall fscore\n";
  for (const auto& mr : reports) {
    const auto& r = mr.report;
    for (std::size_t i = 0; i < r.bins.size(); ++i) {
      const double mid = 0.5 * (r.edges[i] + r.edges[i + 1]);
      const BinCounts& b = r.bins[i];
      auto val = [](const std::optional<double>& v) { return v ? num(*v) : std::string("nan"); };
      out += mr.method + " " + num(mid) + " " + num(distance_from_density(mid)) + " " + val(b.precision()) + " " +
             val(b.recall()) + " " + val(b.fscore()) + "\n";
    }
  }
  return out;
}

void write_report(const std::filesystem::path& csv_path, const std::vector<MethodReport>& reports,
                  double match_radius_mm) {
  write_file_atomic(csv_path, report_csv(reports, match_radius_mm));
  auto plot = csv_path;
  plot.replace_extension(".dat");
  write_file_atomic(plot, report_plot_data(reports));
}

}  // namespace hahog
