#pragma once

#include <string>
#include <vector>

#include "core/depth.hpp"
#include "core/features.hpp"
#include "core/mlp.hpp"

namespace hahog {

struct Candidate {
  Point position;  // window centre in pixels
  double alpha = 0.0;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct DetectionSet {
  std::string frame_id;
  std::string method = "hahog";
  std::vector<Candidate> detections;
};

struct DetectorConfig {
  double threshold = 0.9;
  double nms_radius_px = 0.0;  // <= 0 selects the default for the feature config

  void validate() const;
  /// Radius actually used: nms_radius_px if set, else the default for `features`.
  double effective_radius(const FeatureConfig& features) const;
};

/// Default suppression radius for a feature configuration.
double default_nms_radius(const FeatureConfig& features);

/// One score per window origin on the stride lattice, row-major.
struct ScoreMap {
  FeatureConfig features;
  OriginLattice lattice;
  std::vector<double> alpha;

  double at(int i, int j) const { return alpha[static_cast<std::size_t>(j) * lattice.nx + i]; }
  Point center(int i, int j) const;
};

/// Scores every window with the model. Cells are computed once per frame and shared.
ScoreMap score_windows(const HeightField& field, const MlpModel& model, const FeatureConfig& expected,
                       int threads = 1);

/// Same, with a prepared single-precision network.
ScoreMap score_windows(const HeightField& field, const FloatMlp& net, const FeatureConfig& features,
                       int threads = 1);

/// Entries with alpha >= t (inclusive), positioned at the window centres.
std::vector<Candidate> threshold_candidates(const ScoreMap& scores, double t);

/// Greedy suppression: highest alpha first (ties by (y, x) ascending), a candidate is kept
/// iff no kept candidate lies strictly closer than `radius`.
DetectionSet nms(std::vector<Candidate> candidates, double radius);

DetectionSet detect(const DepthFrame& frame, const Calibration& calib, const MlpModel& model,
                    const DetectorConfig& cfg, int threads = 1);

/// Detections as one JSON-lines record.
std::string detections_to_json_line(const DetectionSet& set);
DetectionSet detections_from_json_line(const std::string& line);
std::vector<DetectionSet> read_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path, const std::vector<DetectionSet>& sets);

}  // namespace hahog
