#include <cmath>

#include "core/errors.hpp"
#include "core/synth.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace hahog;
using oracle::code_of;

TEST_CASE("scenes are a pure function of the seed") {
  const SceneConfig cfg;
  const SyntheticScene a = generate_scene(cfg, 42, "a");
  const SyntheticScene b = generate_scene(cfg, 42, "a");
  CHECK(a.frame == b.frame);
  CHECK(a.annotations.points == b.annotations.points);
  CHECK_FALSE(generate_scene(cfg, 43, "a").frame == a.frame);
}

TEST_CASE("corpus generation does not depend on the thread count") {
  SceneConfig cfg;
  cfg.width = 200;
  cfg.height = 160;
  cfg.count_max = 6;
  const auto one = generate_corpus(cfg, 7, 5, 1);
  const auto three = generate_corpus(cfg, 7, 5, 3);
  REQUIRE(one.size() == 7);
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].frame == three[i].frame);
    CHECK(generate_scene(cfg, one[i].seed, one[i].frame.frame_id).frame == one[i].frame);
  }
  CHECK(code_of([&] { generate_corpus(cfg, -1, 5); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("placement respects spacing, margins and count") {
  const SceneConfig cfg;
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const SyntheticScene s = generate_scene(cfg, seed);
    const double s_px = s.target_spacing_mm / cfg.calib.scale_mm_per_px;
    CHECK(s.target_spacing_mm >= cfg.spacing_mm.lo);
    CHECK(s.target_spacing_mm <= cfg.spacing_mm.hi);
    const auto& pts = s.annotations.points;
    CHECK(static_cast<int>(pts.size()) >= cfg.count_min);
    CHECK(static_cast<int>(pts.size()) <= cfg.count_max);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(pts[i] == s.pedestrians[i].apex);
      CHECK(pts[i].x >= cfg.border_margin_px);
      CHECK(pts[i].y >= cfg.border_margin_px);
      CHECK(pts[i].x <= cfg.width - 1 - cfg.border_margin_px);
      CHECK(pts[i].y <= cfg.height - 1 - cfg.border_margin_px);
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        CHECK(std::sqrt(static_cast<double>(oracle::d2(pts[i], pts[j]))) >= s_px);
    }
  }
}

TEST_CASE("floor noise is bounded and speckle is zero depth") {
  SceneConfig cfg;
  cfg.count_min = cfg.count_max = 0;
  cfg.wall_rate = 0.0;
  cfg.invalid_prob = 0.01;
  const SyntheticScene s = generate_scene(cfg, 3);
  long zeros = 0;
  double sum = 0.0, sq = 0.0;
  long n = 0;
  for (auto d : s.frame.depth) {
    if (d == 0) {
      ++zeros;
      continue;
    }
    const double e = cfg.calib.sensor_height_mm - d;
    CHECK(std::abs(e) <= 3.0 * cfg.floor_noise_mm + 0.5);
    sum += e;
    sq += e * e;
    ++n;
  }
  const double frac = static_cast<double>(zeros) / static_cast<double>(s.frame.depth.size());
  CHECK(frac == doctest::Approx(0.01).epsilon(0.3));
  const double mean = sum / n;
  CHECK(std::abs(mean) < 0.2);
  CHECK(std::sqrt(sq / n - mean * mean) == doctest::Approx(cfg.floor_noise_mm).epsilon(0.05));
}

TEST_CASE("a head apex is the local height maximum near its annotation") {
  SceneConfig cfg;
  cfg.floor_noise_mm = 0.0;
  cfg.invalid_prob = 0.0;
  cfg.hand_rate = 0.0;
  const SyntheticScene s = generate_scene(cfg, 17);
  const HeightField f = to_height_field(s.frame, s.calib);
  for (const Pedestrian& p : s.pedestrians) {
    const double apex = f.at(p.apex.x, p.apex.y);
    CHECK(apex == doctest::Approx(p.apex_height_mm).epsilon(0.002));
    CHECK(apex >= cfg.head_height_mm.lo - 1.0);
    CHECK(apex <= cfg.head_height_mm.hi + 1.0);
  }
}

TEST_CASE("unplaceable crowds raise a generation error") {
  SceneConfig cfg;
  cfg.width = cfg.height = 120;
  cfg.spacing_mm = {900.0, 1000.0};
  cfg.count_min = cfg.count_max = 10;
  cfg.max_attempts = 50;
  CHECK(code_of([&] { generate_scene(cfg, 1); }) == ErrorCode::Generation);
}

TEST_CASE("scene config validation and JSON round-trip") {
  SceneConfig cfg;
  cfg.count_max = 9;
  cfg.spacing_mm = {400, 700};
  const SceneConfig back = SceneConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(code_of([] { SceneConfig::from_json("[1,2"); }) == ErrorCode::Format);
  SceneConfig bad;
  bad.count_min = 5;
  bad.count_max = 4;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::Config);
  bad = {};
  bad.hand_rate = 1.5;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::Config);
  bad = {};
  bad.spacing_mm = {500, 400};
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::Config);
}

TEST_CASE("corpus directories round-trip") {
  oracle::TempDir dir;
  SceneConfig cfg;
  cfg.width = 180;
  cfg.height = 150;
  cfg.count_max = 5;
  cfg.wall_rate = 0.5;
  cfg.hand_rate = 0.3;
  const auto scenes = generate_corpus(cfg, 6, 99);
  write_corpus(dir.path, scenes, cfg, 99);
  const Corpus c = read_corpus(dir.path);
  REQUIRE(c.entries.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& e = c.entries[i];
    CHECK(e.frame_id == scenes[i].frame.frame_id);
    CHECK(e.walls == static_cast<int>(scenes[i].walls.size()));
    CHECK(e.hands == scenes[i].hand_count());
    const FrameRecord rec = load_frame(e.raster);
    CHECK(rec.frame.depth == scenes[i].frame.depth);
    CHECK(rec.calib == cfg.calib);
    REQUIRE(c.annotations_for(e.frame_id));
    CHECK(c.annotations_for(e.frame_id)->points == scenes[i].annotations.points);
  }
  CHECK(c.find("nope") == nullptr);

  // Without a manifest the frames are discovered by name.
  std::filesystem::remove(dir.path / "manifest.json");
  const Corpus bare = read_corpus(dir.path);
  REQUIRE(bare.entries.size() == 6);
  CHECK(std::is_sorted(bare.entries.begin(), bare.entries.end(),
                       [](const CorpusEntry& a, const CorpusEntry& b) { return a.frame_id < b.frame_id; }));
  CHECK(code_of([&] { read_corpus(dir.path / "missing"); }) == ErrorCode::NotFound);
}
