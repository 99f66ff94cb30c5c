#include "core/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "core/errors.hpp"
#include "core/hash.hpp"
#include "core/parallel.hpp"
#include "json.hpp"

namespace hahog {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kShoulderRoundingMm = 120.0;
constexpr double kWallClearanceMm = 350.0;
constexpr double kArmWidthMm = 80.0;
constexpr int kSceneRetries = 16;

double uniform(std::mt19937_64& rng, Range r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); }

void check_range(Range r, const char* name) {
  if (!(r.lo > 0.0) || !(r.hi >= r.lo)) fail(ErrorCode::Config, std::string(name) + " must be a positive range");
}

json range_json(Range r) { return json::array({r.lo, r.hi}); }
Range range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

double segment_distance(double px, double py, const Wall& w) {
  const double vx = w.x1 - w.x0, vy = w.y1 - w.y0;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - w.x0) * vx + (py - w.y0) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (w.x0 + t * vx), dy = py - (w.y0 + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

// Paints `value` into heights where it is higher than what is there.
struct Canvas {
  int width;
  int height;
  std::vector<double>& h;
  void raise(int x, int y, double value) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    double& cur = h[static_cast<std::size_t>(y) * width + x];
    cur = std::max(cur, value);
  }
};

void render_pedestrian(Canvas& c, const Pedestrian& p, double scale) {
  const double ax = p.apex.x, ay = p.apex.y;
  const double shoulder_top = p.apex_height_mm - p.neck_drop_mm;
  const double reach_mm = std::max(p.shoulder_half_width_mm, p.head_radius_mm);
  const int r = static_cast<int>(std::ceil(reach_mm / scale)) + 1;
  const double ca = std::cos(p.shoulder_angle), sa = std::sin(p.shoulder_angle);
  for (int y = p.apex.y - r; y <= p.apex.y + r; ++y) {
    for (int x = p.apex.x - r; x <= p.apex.x + r; ++x) {
      const double dx = (x - ax) * scale, dy = (y - ay) * scale;
      const double d2 = dx * dx + dy * dy;
      const double rh2 = p.head_radius_mm * p.head_radius_mm;
      if (d2 < rh2) c.raise(x, y, p.apex_height_mm - p.head_radius_mm + std::sqrt(rh2 - d2));
      const double u = dx * ca + dy * sa, v = -dx * sa + dy * ca;
      const double q2 = (u / p.shoulder_half_width_mm) * (u / p.shoulder_half_width_mm) +
                        (v / p.shoulder_half_depth_mm) * (v / p.shoulder_half_depth_mm);
      if (q2 < 1.0) c.raise(x, y, shoulder_top - kShoulderRoundingMm * (1.0 - std::sqrt(1.0 - q2)));
    }
  }
  if (!p.raised_hand) return;

  // Arm from the shoulder edge towards the hand, then a small cap for the hand.
  const double hx = p.hand_x, hy = p.hand_y;
  const double dirx = hx - ax, diry = hy - ay;
  const double dlen = std::sqrt(dirx * dirx + diry * diry);
  const double sx = ax + dirx / dlen * (0.6 * p.shoulder_half_width_mm / scale);
  const double sy = ay + diry / dlen * (0.6 * p.shoulder_half_width_mm / scale);
  const Wall arm{sx, sy, hx, hy, kArmWidthMm, 0.0};
  const double hand_r_px = p.hand_radius_mm / scale;
  const int minx = static_cast<int>(std::floor(std::min(sx, hx) - hand_r_px - 2));
  const int maxx = static_cast<int>(std::ceil(std::max(sx, hx) + hand_r_px + 2));
  const int miny = static_cast<int>(std::floor(std::min(sy, hy) - hand_r_px - 2));
  const int maxy = static_cast<int>(std::ceil(std::max(sy, hy) + hand_r_px + 2));
  const double alen2 = (hx - sx) * (hx - sx) + (hy - sy) * (hy - sy);
  for (int y = miny; y <= maxy; ++y) {
    for (int x = minx; x <= maxx; ++x) {
      if (segment_distance(x, y, arm) * scale < 0.5 * kArmWidthMm) {
        double t = alen2 > 0.0 ? ((x - sx) * (hx - sx) + (y - sy) * (hy - sy)) / alen2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        c.raise(x, y, shoulder_top + t * (p.hand_height_mm - p.hand_radius_mm - shoulder_top));
      }
      const double dx = (x - hx) * scale, dy = (y - hy) * scale;
      const double d2 = dx * dx + dy * dy;
      const double r2 = p.hand_radius_mm * p.hand_radius_mm;
      if (d2 < r2) c.raise(x, y, p.hand_height_mm - p.hand_radius_mm + std::sqrt(r2 - d2));
    }
  }
}

void render_wall(Canvas& c, const Wall& w, double scale) {
  const double half_px = 0.5 * w.thickness_mm / scale;
  const int minx = static_cast<int>(std::floor(std::min(w.x0, w.x1) - half_px - 1));
  const int maxx = static_cast<int>(std::ceil(std::max(w.x0, w.x1) + half_px + 1));
  const int miny = static_cast<int>(std::floor(std::min(w.y0, w.y1) - half_px - 1));
  const int maxy = static_cast<int>(std::ceil(std::max(w.y0, w.y1) + half_px + 1));
  for (int y = miny; y <= maxy; ++y)
    for (int x = minx; x <= maxx; ++x)
      if (segment_distance(x, y, w) <= half_px) c.raise(x, y, w.height_mm);
}

Wall sample_wall(std::mt19937_64& rng, const SceneConfig& cfg) {
  const double scale = cfg.calib.scale_mm_per_px;
  const int side = std::uniform_int_distribution<int>(0, 3)(rng);
  const double t = uniform(rng, {0.2, 0.8});
  const double tilt = uniform(rng, {-0.5, 0.5});
  const double length = uniform(rng, {1000.0, 2500.0}) / scale;
  double x0 = 0, y0 = 0, angle = 0;
  switch (side) {
    case 0: x0 = t * cfg.width, y0 = 0, angle = 0.5 * kPi; break;
    case 1: x0 = cfg.width - 1, y0 = t * cfg.height, angle = kPi; break;
    case 2: x0 = t * cfg.width, y0 = cfg.height - 1, angle = -0.5 * kPi; break;
    default: x0 = 0, y0 = t * cfg.height, angle = 0.0; break;
  }
  angle += tilt;
  Wall w;
  w.x0 = x0;
  w.y0 = y0;
  w.x1 = x0 + std::cos(angle) * length;
  w.y1 = y0 + std::sin(angle) * length;
  w.thickness_mm = uniform(rng, {100.0, 200.0});
  w.height_mm = uniform(rng, {1800.0, 2400.0});
  return w;
}

void sample_body(std::mt19937_64& rng, const SceneConfig& cfg, Pedestrian& p) {
  p.apex_height_mm = uniform(rng, cfg.head_height_mm);
  // Children get proportionally smaller bodies.
  const double size = std::clamp(p.apex_height_mm / 1750.0, 0.75, 1.1);
  p.head_radius_mm = uniform(rng, cfg.head_radius_mm) * std::max(size, 0.85);
  p.shoulder_half_width_mm = uniform(rng, cfg.shoulder_half_width_mm) * size;
  p.shoulder_half_depth_mm = uniform(rng, cfg.shoulder_half_depth_mm) * size;
  p.neck_drop_mm = uniform(rng, cfg.neck_drop_mm) * size;
  p.shoulder_angle = uniform(rng, {0.0, kPi});
}

}  // namespace

void SceneConfig::validate() const {
  if (width < 16 || height < 16) fail(ErrorCode::Config, "scene must be at least 16x16 pixels");
  calib.validate();
  check_range(spacing_mm, "spacing_mm");
  check_range(head_height_mm, "head_height_mm");
  check_range(head_radius_mm, "head_radius_mm");
  check_range(shoulder_half_width_mm, "shoulder_half_width_mm");
  check_range(shoulder_half_depth_mm, "shoulder_half_depth_mm");
  check_range(neck_drop_mm, "neck_drop_mm");
  if (count_min < 0 || count_max < count_min) fail(ErrorCode::Config, "pedestrian count range is invalid");
  if (!(floor_noise_mm >= 0.0)) fail(ErrorCode::Config, "floor noise must be non-negative");
  for (double p : {invalid_prob, wall_rate, hand_rate})
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::Config, "probabilities must lie in [0, 1]");
  if (border_margin_px < 0 || 2 * border_margin_px >= std::min(width, height))
    fail(ErrorCode::Config, "border margin leaves no room for pedestrians");
  if (max_attempts < 1) fail(ErrorCode::Config, "max_attempts must be positive");
}

std::string SceneConfig::to_json() const {
  json j = {{"width", width},
            {"height", height},
            {"sensor_height_mm", calib.sensor_height_mm},
            {"scale_mm_per_px", calib.scale_mm_per_px},
            {"spacing_mm", range_json(spacing_mm)},
            {"count", json::array({count_min, count_max})},
            {"head_height_mm", range_json(head_height_mm)},
            {"head_radius_mm", range_json(head_radius_mm)},
            {"shoulder_half_width_mm", range_json(shoulder_half_width_mm)},
            {"shoulder_half_depth_mm", range_json(shoulder_half_depth_mm)},
            {"neck_drop_mm", range_json(neck_drop_mm)},
            {"floor_noise_mm", floor_noise_mm},
            {"invalid_prob", invalid_prob},
            {"wall_rate", wall_rate},
            {"hand_rate", hand_rate},
            {"border_margin_px", border_margin_px},
            {"max_attempts", max_attempts}};
  return j.dump();
}

SceneConfig SceneConfig::from_json(const std::string& text) {
  SceneConfig c;
  try {
    json j = json::parse(text);
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    c.calib.sensor_height_mm = j.at("sensor_height_mm").get<double>();
    c.calib.scale_mm_per_px = j.at("scale_mm_per_px").get<double>();
    c.spacing_mm = range_from(j.at("spacing_mm"));
    c.count_min = j.at("count").at(0).get<int>();
    c.count_max = j.at("count").at(1).get<int>();
    c.head_height_mm = range_from(j.at("head_height_mm"));
    c.head_radius_mm = range_from(j.at("head_radius_mm"));
    c.shoulder_half_width_mm = range_from(j.at("shoulder_half_width_mm"));
    c.shoulder_half_depth_mm = range_from(j.at("shoulder_half_depth_mm"));
    c.neck_drop_mm = range_from(j.at("neck_drop_mm"));
    c.floor_noise_mm = j.at("floor_noise_mm").get<double>();
    c.invalid_prob = j.at("invalid_prob").get<double>();
    c.wall_rate = j.at("wall_rate").get<double>();
    c.hand_rate = j.at("hand_rate").get<double>();
    c.border_margin_px = j.at("border_margin_px").get<int>();
    c.max_attempts = j.at("max_attempts").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad scene config: ") + e.what());
  }
  c.validate();
  return c;
}

int SyntheticScene::hand_count() const {
  return static_cast<int>(std::count_if(pedestrians.begin(), pedestrians.end(),
                                        [](const Pedestrian& p) { return p.raised_hand; }));
}

std::vector<double> render_heights(const SceneConfig& cfg, const std::vector<Pedestrian>& peds,
                                   const std::vector<Wall>& walls) {
  std::vector<double> h(static_cast<std::size_t>(cfg.width) * cfg.height, 0.0);
  Canvas canvas{cfg.width, cfg.height, h};
  for (const Wall& w : walls) render_wall(canvas, w, cfg.calib.scale_mm_per_px);
  for (const Pedestrian& p : peds) render_pedestrian(canvas, p, cfg.calib.scale_mm_per_px);
  return h;
}

SyntheticScene generate_scene(const SceneConfig& cfg, std::uint64_t seed, const std::string& frame_id) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const double scale = cfg.calib.scale_mm_per_px;
  SyntheticScene scene;
  scene.seed = seed;
  scene.calib = cfg.calib;
  scene.target_spacing_mm = uniform(rng, cfg.spacing_mm);
  const double s_px = scene.target_spacing_mm / scale;

  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.wall_rate) scene.walls.push_back(sample_wall(rng, cfg));

  // Room for roughly one pedestrian per 1.6 s^2 inside the margins.
  const int m = cfg.border_margin_px;
  const double free_area = static_cast<double>(cfg.width - 2 * m) * (cfg.height - 2 * m);
  const int capacity = static_cast<int>(free_area / (1.6 * s_px * s_px));
  const int hi = std::max(cfg.count_min, std::min(cfg.count_max, capacity));
  const int count = std::uniform_int_distribution<int>(cfg.count_min, hi)(rng);

  auto admissible = [&](Point p) {
    if (p.x < m || p.y < m || p.x > cfg.width - 1 - m || p.y > cfg.height - 1 - m) return false;
    for (const Wall& w : scene.walls)
      if (segment_distance(p.x, p.y, w) * scale < kWallClearanceMm + 0.5 * w.thickness_mm) return false;
    for (const Pedestrian& q : scene.pedestrians) {
      const double dx = p.x - q.apex.x, dy = p.y - q.apex.y;
      if (std::sqrt(dx * dx + dy * dy) < s_px) return false;
    }
    return true;
  };

  std::uniform_int_distribution<int> ux(m, cfg.width - 1 - m), uy(m, cfg.height - 1 - m);
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      Point p;
      if (scene.pedestrians.empty()) {
        p = {ux(rng), uy(rng)};
      } else {
        const auto& anchor =
            scene.pedestrians[std::uniform_int_distribution<std::size_t>(0, scene.pedestrians.size() - 1)(rng)];
        const double ang = uniform(rng, {0.0, 2.0 * kPi});
        const double dist = uniform(rng, {s_px, 1.1 * s_px});
        p = {static_cast<int>(std::lround(anchor.apex.x + dist * std::cos(ang))),
             static_cast<int>(std::lround(anchor.apex.y + dist * std::sin(ang)))};
        const double dx = p.x - anchor.apex.x, dy = p.y - anchor.apex.y;
        if (std::sqrt(dx * dx + dy * dy) > 1.1 * s_px) continue;
      }
      if (!admissible(p)) continue;
      Pedestrian ped;
      ped.apex = p;
      sample_body(rng, cfg, ped);
      scene.pedestrians.push_back(ped);
      placed = true;
    }
    if (!placed)
      fail(ErrorCode::Generation, "could not place pedestrian " + std::to_string(k) + " at spacing " +
                                      std::to_string(scene.target_spacing_mm) + " mm");
  }

  for (Pedestrian& p : scene.pedestrians) {
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= cfg.hand_rate) continue;
    p.raised_hand = true;
    const double ang = uniform(rng, {0.0, 2.0 * kPi});
    const double dist = uniform(rng, {250.0, 400.0}) / scale;
    p.hand_x = p.apex.x + dist * std::cos(ang);
    p.hand_y = p.apex.y + dist * std::sin(ang);
    p.hand_radius_mm = uniform(rng, {40.0, 55.0});
    p.hand_height_mm = p.apex_height_mm + uniform(rng, {-100.0, 250.0});
  }

  const std::vector<double> h = render_heights(cfg, scene.pedestrians, scene.walls);
  DepthFrame& f = scene.frame;
  f.width = cfg.width;
  f.height = cfg.height;
  f.frame_id = frame_id;
  f.depth.resize(h.size());
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double e = cfg.floor_noise_mm > 0.0 ? std::clamp(noise(rng), -3.0, 3.0) * cfg.floor_noise_mm : 0.0;
    const double d = std::round(cfg.calib.sensor_height_mm - (h[i] + e));
    f.depth[i] = static_cast<std::uint16_t>(std::clamp(d, 1.0, 65535.0));
  }
  if (cfg.invalid_prob > 0.0) {
    std::bernoulli_distribution speckle(cfg.invalid_prob);
    for (auto& d : f.depth)
      if (speckle(rng)) d = 0;
  }

  scene.annotations.frame_id = frame_id;
  for (const Pedestrian& p : scene.pedestrians) scene.annotations.points.push_back(p.apex);
  return scene;
}

std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t index) { return splitmix64(splitmix64(seed) ^ index); }

std::vector<SyntheticScene> generate_corpus(const SceneConfig& cfg, int n_frames, std::uint64_t seed, int threads) {
  cfg.validate();
  if (n_frames < 0) fail(ErrorCode::InvalidArgument, "frame count must be non-negative");
  std::vector<SyntheticScene> scenes(static_cast<std::size_t>(n_frames));
  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    char id[32];
    std::snprintf(id, sizeof id, "frame-%05zu", i);
    for (int retry = 0;; ++retry) {
      try {
        scenes[i] = generate_scene(cfg, scene_seed(seed, i * kSceneRetries + static_cast<std::uint64_t>(retry)), id);
        return;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Generation || retry + 1 >= kSceneRetries) throw;
      }
    }
  });
  return scenes;
}

void write_corpus(const fs::path& dir, const std::vector<SyntheticScene>& scenes, const SceneConfig& cfg,
                  std::uint64_t seed) {
  fs::create_directories(dir / "frames");
  json frames = json::array();
  std::vector<AnnotationSet> annotations;
  for (const SyntheticScene& s : scenes) {
    const std::string file = "frames/" + s.frame.frame_id + ".pgm";
    save_frame(s.frame, s.calib, dir / file);
    frames.push_back({{"frame_id", s.frame.frame_id},
                      {"file", file},
                      {"seed", s.seed},
                      {"target_spacing_mm", s.target_spacing_mm},
                      {"walls", s.walls.size()},
                      {"hands", s.hand_count()}});
    annotations.push_back(s.annotations);
  }
  write_annotations(dir / "annotations.jsonl", annotations);
  const std::string cfg_text = cfg.to_json();
  json manifest = {{"seed", seed},
                   {"n_frames", scenes.size()},
                   {"config", json::parse(cfg_text)},
                   {"config_hash", fnv1a_hex(cfg_text)},
                   {"frames", frames}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

const AnnotationSet* Corpus::annotations_for(const std::string& frame_id) const {
  for (const auto& a : annotations)
    if (a.frame_id == frame_id) return &a;
  return nullptr;
}

const CorpusEntry* Corpus::find(const std::string& frame_id) const {
  for (const auto& e : entries)
    if (e.frame_id == frame_id) return &e;
  return nullptr;
}

Corpus read_corpus(const fs::path& dir) {
  Corpus c;
  c.dir = dir;
  if (fs::exists(dir / "manifest.json")) {
    try {
      json m = json::parse(read_file(dir / "manifest.json"));
      for (const auto& f : m.at("frames")) {
        CorpusEntry e;
        e.frame_id = f.at("frame_id").get<std::string>();
        e.raster = dir / f.at("file").get<std::string>();
        e.walls = f.value("walls", 0);
        e.hands = f.value("hands", 0);
        c.entries.push_back(std::move(e));
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::Format, std::string("bad corpus manifest: ") + e.what());
    }
  } else if (fs::exists(dir / "frames")) {
    std::vector<fs::path> files;
    for (const auto& ent : fs::directory_iterator(dir / "frames"))
      if (ent.path().extension() == ".pgm") files.push_back(ent.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) c.entries.push_back({p.stem().string(), p, 0, 0});
  } else {
    fail(ErrorCode::NotFound, "no corpus at " + dir.string());
  }

  std::vector<AnnotationSet> all;
  if (fs::exists(dir / "annotations.jsonl")) all = read_annotations(dir / "annotations.jsonl");
  for (const auto& e : c.entries) {
    auto it = std::find_if(all.begin(), all.end(), [&](const AnnotationSet& a) { return a.frame_id == e.frame_id; });
    c.annotations.push_back(it != all.end() ? *it : AnnotationSet{e.frame_id, {}});
  }
  return c;
}

}  // namespace hahog
