#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/depth.hpp"
#include "core/detector.hpp"

namespace hahog {

struct MatchPair {
  int detection = 0;
  int annotation = 0;
  double distance_px = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> tp;
  std::vector<int> fp;  // detection indices
  std::vector<int> fn;  // annotation indices
};

/// Index of the nearest annotation (lowest index on ties), or -1 without annotations.
int nearest_annotation(const std::vector<Point>& annotations, Point p);

/// Greedy one-to-one matching. Each detection may only match its nearest annotation,
/// within `match_radius_mm`; pairs are taken in order of (distance, annotation, detection).
MatchResult match(const std::vector<Candidate>& detections, const std::vector<Point>& annotations,
                  double match_radius_mm, const Calibration& calib);

struct DensityRecord {
  int annotation = 0;
  double r_nn_m = 0.0;
  double rho = 0.0;  // pedestrians per square metre
};

/// Nearest-neighbour density of each annotation that has a neighbour.
std::vector<DensityRecord> nn_density(const std::vector<Point>& annotations, const Calibration& calib);

double density_from_distance(double r_nn_m);
double distance_from_density(double rho);

std::vector<double> default_bin_edges();

struct BinCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  BinCounts& operator+=(const BinCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  std::optional<double> precision() const;
  std::optional<double> recall() const;
  std::optional<double> fscore() const;
};

/// Bins are (lo, hi]; the first bin also holds 0 and the last holds everything above it.
struct BinReport {
  std::vector<double> edges;
  std::vector<BinCounts> bins;

  explicit BinReport(std::vector<double> edges_ = default_bin_edges());
  int bin_of(double rho) const;
  BinReport& operator+=(const BinReport& o);
  BinCounts total() const;
  /// Sum of the bins lying inside (lo, hi].
  BinCounts merged(double lo, double hi) const;
};

/// Bins every TP, FP and FN by the density of its nearest annotation. Annotations
/// without a neighbour, and false positives in frames without annotations, go to the first bin.
BinReport bin_and_score(const MatchResult& result, const std::vector<Candidate>& detections,
                        const std::vector<Point>& annotations, const std::vector<DensityRecord>& densities,
                        const std::vector<double>& edges);

struct EvalConfig {
  double match_radius_mm = 300.0;
  std::vector<double> edges = default_bin_edges();

  void validate() const;
};

BinReport evaluate_frame(const std::vector<Candidate>& detections, const std::vector<Point>& annotations,
                         const Calibration& calib, const EvalConfig& cfg);

struct MethodReport {
  std::string method;
  BinReport report;
};

/// CSV with one row per (bin, method), headed by the match radius.
std::string report_csv(const std::vector<MethodReport>& reports, double match_radius_mm);
/// Whitespace-separated plot data: bin centres on both axes and the three scores.
std::string report_plot_data(const std::vector<MethodReport>& reports);
void write_report(const std::filesystem::path& csv_path, const std::vector<MethodReport>& reports,
                  double match_radius_mm);

}  // namespace hahog
