#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/depth.hpp"

namespace hahog {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Parameters of the synthetic overhead scene generator. Lengths in millimetres.
struct SceneConfig {
  int width = 512;
  int height = 424;
  Calibration calib{3000.0, 10.0};
  Range spacing_mm{300.0, 1000.0};  // per-scene nearest-neighbour target is drawn from here
  int count_min = 4;
  int count_max = 16;
  Range head_height_mm{1200.0, 1900.0};
  Range head_radius_mm{80.0, 105.0};
  Range shoulder_half_width_mm{180.0, 230.0};
  Range shoulder_half_depth_mm{100.0, 140.0};
  Range neck_drop_mm{220.0, 290.0};
  double floor_noise_mm = 8.0;
  double invalid_prob = 0.002;
  double wall_rate = 0.3;  // probability that a scene contains a wall
  double hand_rate = 0.1;  // probability that a pedestrian raises a hand
  int border_margin_px = 40;
  int max_attempts = 1000;  // placement attempts per pedestrian

  void validate() const;
  std::string to_json() const;
  static SceneConfig from_json(const std::string& text);
};

struct Pedestrian {
  Point apex;
  double apex_height_mm = 0.0;
  double head_radius_mm = 0.0;
  double shoulder_half_width_mm = 0.0;
  double shoulder_half_depth_mm = 0.0;
  double shoulder_angle = 0.0;  // radians, direction of the shoulder line
  double neck_drop_mm = 0.0;
  bool raised_hand = false;
  double hand_x = 0.0, hand_y = 0.0;  // pixels
  double hand_height_mm = 0.0;
  double hand_radius_mm = 0.0;
};

struct Wall {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;  // pixels
  double thickness_mm = 0.0;
  double height_mm = 0.0;
};

struct SyntheticScene {
  DepthFrame frame;
  Calibration calib;
  AnnotationSet annotations;
  std::vector<Pedestrian> pedestrians;
  std::vector<Wall> walls;
  double target_spacing_mm = 0.0;
  std::uint64_t seed = 0;

  int hand_count() const;
  bool has_distractors() const { return !walls.empty() || hand_count() > 0; }
};

/// Noise-free height map (mm) of the given bodies; overlaps composite by maximum.
std::vector<double> render_heights(const SceneConfig& cfg, const std::vector<Pedestrian>& peds,
                                   const std::vector<Wall>& walls);

SyntheticScene generate_scene(const SceneConfig& cfg, std::uint64_t seed, const std::string& frame_id = "scene");

/// Seed of scene `index` in a corpus seeded with `seed`.
std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t index);

std::vector<SyntheticScene> generate_corpus(const SceneConfig& cfg, int n_frames, std::uint64_t seed,
                                            int threads = 1);

/// Layout: frames/<id>.pgm + frames/<id>.json, annotations.jsonl, manifest.json.
void write_corpus(const std::filesystem::path& dir, const std::vector<SyntheticScene>& scenes,
                  const SceneConfig& cfg, std::uint64_t seed);

struct CorpusEntry {
  std::string frame_id;
  std::filesystem::path raster;
  int walls = 0;
  int hands = 0;
};

struct Corpus {
  std::filesystem::path dir;
  std::vector<CorpusEntry> entries;
  std::vector<AnnotationSet> annotations;  // same order as entries

  const AnnotationSet* annotations_for(const std::string& frame_id) const;
  const CorpusEntry* find(const std::string& frame_id) const;
};

/// Reads a corpus directory. Without a manifest, every frames/*.pgm is listed in name order.
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace hahog
