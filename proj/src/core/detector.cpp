#include "core/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

#include "core/errors.hpp"
#include "core/parallel.hpp"
#include "json.hpp"

namespace hahog {

using nlohmann::json;

void DetectorConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) fail(ErrorCode::Config, "threshold must lie in (0, 1)");
  if (!std::isfinite(nms_radius_px)) fail(ErrorCode::Config, "nms radius must be finite");
}

double default_nms_radius(const FeatureConfig& features) { return 0.5 * features.window_px(); }

double DetectorConfig::effective_radius(const FeatureConfig& features) const {
  return nms_radius_px > 0.0 ? nms_radius_px : default_nms_radius(features);
}

Point ScoreMap::center(int i, int j) const {
  const CellOrigin o = lattice.origin(i, j);
  const int half = features.window_px() / 2;
  return {o.cx * features.cell_size + half, o.cy * features.cell_size + half};
}

ScoreMap score_windows(const HeightField& field, const MlpModel& model, const FeatureConfig& expected,
                       int threads) {
  if (!(model.feature_config == expected))
    fail(ErrorCode::Config, "model feature configuration " + model.feature_config.to_json() +
                                " does not match detector configuration " + expected.to_json());
  return score_windows(field, FloatMlp(model), expected, threads);
}

ScoreMap score_windows(const HeightField& field, const FloatMlp& net, const FeatureConfig& features,
                       int threads) {
  features.validate();
  if (net.input_dim() != static_cast<int>(features.length()))
    fail(ErrorCode::Config, "model input length does not match the feature configuration");
  const FrameFeatures ff(field, features, threads);

  ScoreMap map;
  map.features = features;
  map.lattice = ff.lattice();
  map.alpha.assign(static_cast<std::size_t>(map.lattice.nx) * map.lattice.ny, 0.0);
  const std::size_t len = features.length();

  // One batch per lattice row: batch shape never depends on the thread count.
  parallel_for(static_cast<std::size_t>(map.lattice.ny), threads, [&](std::size_t row) {
    const int j = static_cast<int>(row);
    RowMatrixXf x(map.lattice.nx, static_cast<Eigen::Index>(len));
    for (int i = 0; i < map.lattice.nx; ++i) ff.window(i, j, x.row(i).data());
    net.score(x, std::span<double>(map.alpha.data() + row * static_cast<std::size_t>(map.lattice.nx),
                                   static_cast<std::size_t>(map.lattice.nx)));
  });
  return map;
}

std::vector<Candidate> threshold_candidates(const ScoreMap& scores, double t) {
  std::vector<Candidate> out;
  for (int j = 0; j < scores.lattice.ny; ++j)
    for (int i = 0; i < scores.lattice.nx; ++i)
      if (scores.at(i, j) >= t) out.push_back({scores.center(i, j), scores.at(i, j)});
  return out;
}

DetectionSet nms(std::vector<Candidate> candidates, double radius) {
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.alpha != b.alpha) return a.alpha > b.alpha;
    if (a.position.y != b.position.y) return a.position.y < b.position.y;
    return a.position.x < b.position.x;
  });
  const double r2 = radius * radius;
  DetectionSet out;
  for (const Candidate& c : candidates) {
    bool suppressed = false;
    for (const Candidate& k : out.detections) {
      const double dx = c.position.x - k.position.x;
      const double dy = c.position.y - k.position.y;
      if (dx * dx + dy * dy < r2) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) out.detections.push_back(c);
  }
  return out;
}

DetectionSet detect(const DepthFrame& frame, const Calibration& calib, const MlpModel& model,
                    const DetectorConfig& cfg, int threads) {
  cfg.validate();
  const HeightField field = to_height_field(frame, calib);
  const ScoreMap scores = score_windows(field, model, model.feature_config, threads);
  DetectionSet set = nms(threshold_candidates(scores, cfg.threshold), cfg.effective_radius(model.feature_config));
  set.frame_id = frame.frame_id;
  set.method = model.feature_config.n_height_bins > 0 ? "hahog" : "hog";
  return set;
}

std::string detections_to_json_line(const DetectionSet& set) {
  json dets = json::array();
  for (const Candidate& c : set.detections) dets.push_back({{"x", c.position.x}, {"y", c.position.y}, {"alpha", c.alpha}});
  return json{{"frame_id", set.frame_id}, {"method", set.method}, {"detections", dets}}.dump();
}

DetectionSet detections_from_json_line(const std::string& line) {
  DetectionSet set;
  try {
    json j = json::parse(line);
    set.frame_id = j.at("frame_id").get<std::string>();
    set.method = j.value("method", std::string("hahog"));
    for (const auto& d : j.at("detections"))
      set.detections.push_back({{d.at("x").get<int>(), d.at("y").get<int>()}, d.at("alpha").get<double>()});
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad detection record: ") + e.what());
  }
  return set;
}

std::vector<DetectionSet> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<DetectionSet> out;
  std::string line;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(detections_from_json_line(line));
  return out;
}

void write_detections(const std::filesystem::path& path, const std::vector<DetectionSet>& sets) {
  std::string out;
  for (const auto& s : sets) out += detections_to_json_line(s) + "\n";
  write_file_atomic(path, out);
}

}  // namespace hahog
