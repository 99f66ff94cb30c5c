#include <numbers>

#include "core/errors.hpp"
#include "core/features.hpp"
#include "core/synth.hpp"
#include "core/training.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace hahog;

TEST_CASE("default descriptor length is 11*11*8 + 16") {
  FeatureConfig c;
  CHECK(c.window_px() == 66);
  CHECK(c.hog_length() == 968);
  CHECK(c.length() == 984);
  c.n_height_bins = 0;
  CHECK(c.length() == 968);
}

TEST_CASE("feature config validation and JSON round-trip") {
  FeatureConfig c;
  c.cell_size = 5;
  c.n_bins = 12;
  c.h_max_mm = 2000.5;
  CHECK(FeatureConfig::from_json(c.to_json()) == c);
  FeatureConfig bad;
  bad.n_bins = 6;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.window_cells = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(FeatureConfig::from_json("{}"), Error);
}

TEST_CASE("polar form") {
  const Polar p = to_polar(3.0, 4.0);
  CHECK(p.r == doctest::Approx(5.0));
  CHECK(p.phi == doctest::Approx(std::atan2(4.0, 3.0)));
  CHECK(to_polar(0.0, 0.0).r == 0.0);
  CHECK(to_polar(0.0, 0.0).phi == 0.0);
  CHECK(to_polar(-1.0, 0.0).phi == doctest::Approx(std::numbers::pi));
  CHECK(to_polar(0.0, -1.0).phi == doctest::Approx(1.5 * std::numbers::pi));
  CHECK(to_polar(1.0, -1e-300).phi < 2 * std::numbers::pi);
}

TEST_CASE("orientation bins agree with the comparison oracle") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> u(-40, 40);
  for (int i = 0; i < 20000; ++i) {
    const double gx = u(rng) / 2.0, gy = u(rng) / 2.0;
    if (gx == 0 && gy == 0) continue;
    REQUIRE(orientation_bin(gx, gy, 8) == oracle::octant(gx, gy));
  }
  // diagonals sit on bin edges and belong to the upper bin
  CHECK(orientation_bin(1, 1, 8) == 1);
  CHECK(orientation_bin(-1, 1, 8) == 3);
  CHECK(orientation_bin(-1, -1, 8) == 5);
  CHECK(orientation_bin(1, -1, 8) == 7);
  CHECK(orientation_bin(0, 1, 8) == 2);
  CHECK(orientation_bin(-1, 0, 8) == 4);
}

TEST_CASE("orientation bins for other bin counts match atan2 away from edges") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n : {4, 8, 12, 16}) {
    for (int i = 0; i < 5000; ++i) {
      const double gx = u(rng), gy = u(rng);
      double phi = std::atan2(gy, gx);
      if (phi < 0) phi += 2 * std::numbers::pi;
      const double frac = phi / (2 * std::numbers::pi / n);
      if (std::abs(frac - std::round(frac)) < 1e-9) continue;
      REQUIRE(orientation_bin(gx, gy, n) == oracle::bin_atan2(gx, gy, n));
    }
  }
}

TEST_CASE("quarter-turn of a gradient shifts its bin by exactly n/4") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> u(-30, 30);
  for (int n : {4, 8, 16}) {
    for (int i = 0; i < 5000; ++i) {
      const double gx = u(rng), gy = u(rng);
      if (gx == 0 && gy == 0) continue;
      REQUIRE(orientation_bin(-gy, gx, n) == (orientation_bin(gx, gy, n) + n / 4) % n);
    }
  }
}

TEST_CASE("gradient matches the stencil oracle, including borders and invalid neighbours") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const HeightField f = oracle::random_field(17 + trial, 9 + 2 * trial, rng, 0.1);
    const GradientField g = compute_gradient(f);
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        const auto o = oracle::gradient(f, x, y);
        const std::size_t i = f.index(x, y);
        REQUIRE(g.gx[i] == o.gx);
        REQUIRE(g.gy[i] == o.gy);
        REQUIRE(g.gr[i] == doctest::Approx(std::hypot(o.gx, o.gy)));
        REQUIRE(g.gphi[i] >= 0.0);
        REQUIRE(g.gphi[i] < 2 * std::numbers::pi);
      }
  }
  HeightField tiny;
  tiny.width = 2;
  tiny.height = 5;
  tiny.h.assign(10, 0.0);
  tiny.valid.assign(10, 1);
  CHECK_THROWS_AS(compute_gradient(tiny), Error);
}

TEST_CASE("flat regions have zero gradient; a step gives a one-sided edge") {
  HeightField f;
  f.width = 6;
  f.height = 3;
  f.h = {0, 0, 0, 10, 10, 10, 0, 0, 0, 10, 10, 10, 0, 0, 0, 10, 10, 10};
  f.valid.assign(18, 1);
  const GradientField g = compute_gradient(f);
  CHECK(g.gx[f.index(0, 1)] == 0.0);
  CHECK(g.gx[f.index(2, 1)] == 5.0);
  CHECK(g.gx[f.index(3, 1)] == 5.0);
  CHECK(g.gx[f.index(5, 1)] == 0.0);
  CHECK(g.gy[f.index(3, 1)] == 0.0);
}

TEST_CASE("cell histograms match the oracle and are unit length or zero") {
  std::mt19937_64 rng(31);
  const HeightField f = oracle::random_field(48, 36, rng, 0.05);
  const CellGrid grid = cell_histograms(compute_gradient(f), 6, 8);
  CHECK(grid.cells_x == 8);
  CHECK(grid.cells_y == 6);
  for (int cy = 0; cy < grid.cells_y; ++cy)
    for (int cx = 0; cx < grid.cells_x; ++cx) {
      const auto want = oracle::cell(f, cx, cy, 6);
      const auto got = grid.cell(cx, cy);
      double sq = 0;
      for (int b = 0; b < 8; ++b) {
        REQUIRE(got[static_cast<std::size_t>(b)] == doctest::Approx(want[static_cast<std::size_t>(b)]).epsilon(1e-12));
        sq += got[static_cast<std::size_t>(b)] * got[static_cast<std::size_t>(b)];
      }
      CHECK((sq == 0.0 || std::abs(std::sqrt(sq) - 1.0) < 1e-12));
    }
}

TEST_CASE("a cell without gradient stays the zero vector") {
  HeightField f;
  f.width = f.height = 12;
  f.h.assign(144, 1500.0);
  f.valid.assign(144, 1);
  const CellGrid grid = cell_histograms(compute_gradient(f), 6, 8);
  for (double v : grid.histograms) CHECK(v == 0.0);
}

TEST_CASE("height histogram: bins, top bin, invalid pixels and empty windows") {
  HeightField f;
  f.width = 4;
  f.height = 1;
  f.h = {0.0, 137.5, 2199.9, 5000.0};
  f.valid = {1, 1, 1, 1};
  auto hh = height_histogram(f, {0, 0, 4, 1}, 16, 2200.0);
  CHECK(hh[0] == 0.25);
  CHECK(hh[1] == 0.25);
  CHECK(hh[15] == 0.5);
  f.valid = {0, 1, 0, 0};
  hh = height_histogram(f, {0, 0, 4, 1}, 16, 2200.0);
  CHECK(hh[1] == 1.0);
  f.valid = {0, 0, 0, 0};
  hh = height_histogram(f, {0, 0, 4, 1}, 16, 2200.0);
  for (double v : hh) CHECK(v == 0.0);
  CHECK(height_bin(2200.0, 16, 2200.0) == 15);
  CHECK(height_bin(-3.0, 16, 2200.0) == 0);
  CHECK_THROWS_AS(height_histogram(f, {1, 0, 4, 1}, 16, 2200.0), Error);
}

TEST_CASE("height histogram matches the counting oracle") {
  std::mt19937_64 rng(41);
  const HeightField f = oracle::random_field(30, 30, rng, 0.1, 3000);
  for (int t = 0; t < 50; ++t) {
    std::uniform_int_distribution<int> u(0, 20);
    const int x = u(rng), y = u(rng);
    const auto got = height_histogram(f, {x, y, 10, 9}, 16, 2200.0);
    const auto want = oracle::height_hist(f, x, y, 10, 9, 16, 2200.0);
    for (std::size_t b = 0; b < 16; ++b) REQUIRE(got[b] == doctest::Approx(want[b]).epsilon(1e-15));
  }
}

TEST_CASE("shared-cell frame features equal the per-window oracle") {
  SceneConfig sc;
  sc.width = 150;
  sc.height = 126;
  sc.count_min = 2;
  sc.count_max = 4;
  sc.border_margin_px = 20;
  const SyntheticScene scene = generate_scene(sc, 5);
  const HeightField f = to_height_field(scene.frame, scene.calib);
  FeatureConfig cfg;
  for (int threads : {1, 3}) {
    const FrameFeatures ff(f, cfg, threads);
    CHECK(ff.lattice().nx == 150 / 6 - 11 + 1);
    CHECK(ff.lattice().ny == 126 / 6 - 11 + 1);
    std::vector<double> got(cfg.length());
    for (int j = 0; j < ff.lattice().ny; ++j)
      for (int i = 0; i < ff.lattice().nx; ++i) {
        ff.window(i, j, got.data());
        const CellOrigin o = ff.lattice().origin(i, j);
        const auto want = oracle::window(f, o.cx, o.cy, cfg);
        REQUIRE(want.size() == got.size());
        for (std::size_t k = 0; k < got.size(); ++k) REQUIRE(std::abs(got[k] - want[k]) <= 1e-12);
      }
  }
}

TEST_CASE("fused frame cells equal the reference two-pass path exactly") {
  std::mt19937_64 rng(51);
  const HeightField f = oracle::random_field(80, 70, rng, 0.03);
  FeatureConfig cfg;
  const CellGrid fused = precompute_frame_cells(f, cfg, 2);
  const CellGrid ref = cell_histograms(compute_gradient(f), cfg.cell_size, cfg.n_bins);
  CHECK(fused.histograms == ref.histograms);
}

TEST_CASE("plain HOG is the HA-HOG descriptor without its height part") {
  std::mt19937_64 rng(61);
  const HeightField f = oracle::random_field(72, 72, rng, 0.02);
  FeatureConfig ha;
  FeatureConfig hog = ha;
  hog.n_height_bins = 0;
  const FrameFeatures a(f, ha), b(f, hog);
  std::vector<double> va(ha.length()), vb(hog.length());
  a.window(0, 0, va.data());
  b.window(0, 0, vb.data());
  CHECK(vb.size() + 16 == va.size());
  CHECK(std::equal(vb.begin(), vb.end(), va.begin()));
}

TEST_CASE("window descriptor bounds") {
  std::mt19937_64 rng(71);
  const HeightField f = oracle::random_field(66, 66, rng);
  FeatureConfig cfg;
  const CellGrid grid = precompute_frame_cells(f, cfg);
  CHECK(window_descriptor(grid, {0, 0}, {11, 1}).size() == 968);
  CHECK_THROWS_AS(window_descriptor(grid, {1, 0}, {11, 1}), Error);
  HeightField small = oracle::random_field(60, 80, rng);
  CHECK_THROWS_AS(precompute_frame_cells(small, cfg), Error);
}

TEST_CASE("rotating a window permutes cells and shifts bins, height histogram unchanged") {
  std::mt19937_64 rng(81);
  FeatureConfig cfg;
  const int C = cfg.window_cells, nb = cfg.n_bins;
  for (int t = 0; t < 20; ++t) {
    const HeightField p = oracle::random_field(66, 66, rng, 0.05);
    const HeightField r = rotate90(p);
    const auto a = patch_descriptor(p, cfg);
    const auto b = patch_descriptor(r, cfg);
    for (int j = 0; j < C; ++j)
      for (int i = 0; i < C; ++i)
        for (int k = 0; k < nb; ++k) {
          const std::size_t dst = static_cast<std::size_t>((j * C + i) * nb + (k + nb / 4) % nb);
          const std::size_t src = static_cast<std::size_t>(((C - 1 - i) * C + j) * nb + k);
          REQUIRE(std::abs(b[dst] - a[src]) <= 1e-12);
        }
    for (std::size_t k = cfg.hog_length(); k < cfg.length(); ++k) REQUIRE(b[k] == a[k]);
  }
}
