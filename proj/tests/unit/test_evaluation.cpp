#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "core/errors.hpp"
#include "core/evaluation.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace hahog;
using oracle::code_of;

namespace {

const Calibration kCal{3000.0, 10.0};

// Rescans every remaining admissible pair on each step instead of sorting once.
MatchResult rescan_match(const std::vector<Candidate>& dets, const std::vector<Point>& ann, double r_px) {
  std::vector<int> nearest(dets.size(), -1);
  for (std::size_t k = 0; k < dets.size(); ++k) {
    std::int64_t best = -1;
    for (std::size_t a = 0; a < ann.size(); ++a) {
      const auto d = oracle::d2(ann[a], dets[k].position);
      if (best < 0 || d < best) {
        best = d;
        nearest[k] = static_cast<int>(a);
      }
    }
  }
  std::vector<char> au(ann.size(), 0), du(dets.size(), 0);
  MatchResult m;
  for (;;) {
    std::int64_t bd = -1;
    int ba = -1, bk = -1;
    for (std::size_t k = 0; k < dets.size(); ++k) {
      const int a = nearest[k];
      if (a < 0 || du[k] || au[static_cast<std::size_t>(a)]) continue;
      const auto d = oracle::d2(ann[static_cast<std::size_t>(a)], dets[k].position);
      if (static_cast<double>(d) > r_px * r_px) continue;
      if (bd < 0 || d < bd || (d == bd && (a < ba || (a == ba && static_cast<int>(k) < bk)))) {
        bd = d;
        ba = a;
        bk = static_cast<int>(k);
      }
    }
    if (bd < 0) break;
    au[static_cast<std::size_t>(ba)] = du[static_cast<std::size_t>(bk)] = 1;
    m.tp.push_back({bk, ba, std::sqrt(static_cast<double>(bd))});
  }
  for (std::size_t k = 0; k < dets.size(); ++k)
    if (!du[k]) m.fp.push_back(static_cast<int>(k));
  for (std::size_t a = 0; a < ann.size(); ++a)
    if (!au[a]) m.fn.push_back(static_cast<int>(a));
  return m;
}

struct Frame {
  std::vector<Point> ann;
  std::vector<Candidate> det;
};

Frame random_frame(std::mt19937_64& rng, int n_ann, int n_det, int extent) {
  std::uniform_int_distribution<int> u(0, extent);
  Frame f;
  for (int i = 0; i < n_ann; ++i) f.ann.push_back({u(rng), u(rng)});
  for (int i = 0; i < n_det; ++i) f.det.push_back({{u(rng), u(rng)}, 0.95});
  return f;
}

int bin_by_scan(const std::vector<double>& edges, double rho) {
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (rho <= edges[i]) return static_cast<int>(i) - 1;
  return static_cast<int>(edges.size()) - 2;
}

}  // namespace

TEST_CASE("density of the nearest neighbour distance") {
  CHECK(density_from_distance(1.0) == doctest::Approx(1.0 / std::numbers::pi));
  CHECK(density_from_distance(0.3989) == doctest::Approx(2.0).epsilon(1e-3));
  for (double rho : {0.1, 0.5, 2.0, 3.7})
    CHECK(density_from_distance(distance_from_density(rho)) == doctest::Approx(rho));
  CHECK(std::isinf(distance_from_density(0.0)));

  const auto d = nn_density({{0, 0}, {100, 0}, {100, 50}}, kCal);
  REQUIRE(d.size() == 3);
  CHECK(d[0].r_nn_m == doctest::Approx(1.0));
  CHECK(d[1].r_nn_m == doctest::Approx(0.5));
  CHECK(d[2].rho == doctest::Approx(1.0 / (std::numbers::pi * 0.25)));
  CHECK(nn_density({{5, 5}}, kCal).empty());
}

TEST_CASE("matching agrees with a rescanning greedy oracle") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const Frame f = random_frame(rng, trial % 12, trial % 15, trial % 3 ? 200 : 40);
    const double radius_mm = 100.0 + 50.0 * (trial % 6);
    const MatchResult got = match(f.det, f.ann, radius_mm, kCal);
    const MatchResult want = rescan_match(f.det, f.ann, radius_mm / kCal.scale_mm_per_px);
    REQUIRE(got.tp.size() == want.tp.size());
    for (std::size_t i = 0; i < got.tp.size(); ++i) {
      CHECK(got.tp[i].detection == want.tp[i].detection);
      CHECK(got.tp[i].annotation == want.tp[i].annotation);
      CHECK(got.tp[i].distance_px <= radius_mm / kCal.scale_mm_per_px);
    }
    CHECK(got.fp == want.fp);
    CHECK(got.fn == want.fn);
    CHECK(got.tp.size() + got.fp.size() == f.det.size());
    CHECK(got.tp.size() + got.fn.size() == f.ann.size());
  }
}

TEST_CASE("a detection only matches its nearest annotation") {
  // Detection 1 is nearest to annotation 0, which detection 0 takes; it may not fall back to annotation 1.
  const std::vector<Point> ann{{0, 0}, {40, 0}};
  const std::vector<Candidate> det{{{1, 0}, 0.95}, {{15, 0}, 0.95}};
  const MatchResult m = match(det, ann, 300.0, kCal);
  REQUIRE(m.tp.size() == 1);
  CHECK(m.fp == std::vector<int>{1});
  CHECK(m.fn == std::vector<int>{1});
  // The radius is inclusive.
  CHECK(match({{{30, 0}, 0.9}}, {{0, 0}}, 300.0, kCal).tp.size() == 1);
  CHECK(match({{{31, 0}, 0.9}}, {{0, 0}}, 300.0, kCal).tp.empty());
}

TEST_CASE("bins are (lo, hi] with the ends folded in") {
  BinReport r;
  CHECK(r.bins.size() == 7);
  CHECK(r.bin_of(0.0) == 0);
  CHECK(r.bin_of(0.5) == 0);
  CHECK(r.bin_of(std::nextafter(0.5, 1.0)) == 1);
  CHECK(r.bin_of(3.0) == 5);
  CHECK(r.bin_of(3.5) == 6);
  CHECK(r.bin_of(40.0) == 6);
  CHECK(code_of([] { BinReport({1.0}); }) == ErrorCode::Config);
  CHECK(code_of([] { BinReport({0.0, 1.0, 1.0}); }) == ErrorCode::Config);
}

TEST_CASE("every outcome lands in the bin of its nearest annotation") {
  std::mt19937_64 rng(5);
  const auto edges = default_bin_edges();
  for (int trial = 0; trial < 200; ++trial) {
    const Frame f = random_frame(rng, trial % 9, trial % 11, 120);
    const MatchResult m = match(f.det, f.ann, 300.0, kCal);
    const auto dens = nn_density(f.ann, kCal);
    const BinReport rep = bin_and_score(m, f.det, f.ann, dens, edges);

    std::vector<BinCounts> want(edges.size() - 1);
    auto ann_bin = [&](int a) {
      if (f.ann.size() < 2) return 0;
      std::int64_t best = -1;
      for (std::size_t j = 0; j < f.ann.size(); ++j)
        if (static_cast<int>(j) != a) {
          const auto d = oracle::d2(f.ann[static_cast<std::size_t>(a)], f.ann[j]);
          if (best < 0 || d < best) best = d;
        }
      const double r_m = std::sqrt(static_cast<double>(best)) * 10.0 / 1000.0;
      return bin_by_scan(edges, 1.0 / (std::numbers::pi * r_m * r_m));
    };
    for (const auto& p : m.tp) want[static_cast<std::size_t>(ann_bin(p.annotation))].tp++;
    for (int a : m.fn) want[static_cast<std::size_t>(ann_bin(a))].fn++;
    for (int k : m.fp) {
      // Voronoi cell by brute force: smallest distance, lowest index.
      int owner = -1;
      std::int64_t best = -1;
      for (std::size_t a = 0; a < f.ann.size(); ++a) {
        const auto d = oracle::d2(f.ann[a], f.det[static_cast<std::size_t>(k)].position);
        if (best < 0 || d < best) {
          best = d;
          owner = static_cast<int>(a);
        }
      }
      want[static_cast<std::size_t>(owner < 0 ? 0 : ann_bin(owner))].fp++;
    }
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(rep.bins[i].tp == want[i].tp);
      CHECK(rep.bins[i].fp == want[i].fp);
      CHECK(rep.bins[i].fn == want[i].fn);
    }
    const BinCounts t = rep.total();
    CHECK(t.tp + t.fp == static_cast<long>(f.det.size()));
    CHECK(t.tp + t.fn == static_cast<long>(f.ann.size()));
  }
}

TEST_CASE("scores and aggregation") {
  BinCounts c{3, 1, 2};
  CHECK(*c.precision() == doctest::Approx(0.75));
  CHECK(*c.recall() == doctest::Approx(0.6));
  CHECK(*c.fscore() == doctest::Approx(2 * 0.75 * 0.6 / 1.35));
  CHECK_FALSE(BinCounts{0, 0, 2}.precision());
  CHECK_FALSE(BinCounts{0, 0, 2}.fscore());
  CHECK(*BinCounts{0, 1, 1}.fscore() == 0.0);

  std::mt19937_64 rng(8);
  BinReport sum;
  std::vector<BinCounts> manual(7);
  for (int k = 0; k < 20; ++k) {
    const Frame f = random_frame(rng, 6, 7, 150);
    const BinReport r = evaluate_frame(f.det, f.ann, kCal, {});
    for (std::size_t i = 0; i < 7; ++i) manual[i] += r.bins[i];
    sum += r;
  }
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(sum.bins[i].tp == manual[i].tp);
    CHECK(sum.bins[i].fp == manual[i].fp);
  }
  const BinCounts hi = sum.merged(2.5, 4.0);
  CHECK(hi.tp == manual[5].tp + manual[6].tp);
  CHECK(hi.fn == manual[5].fn + manual[6].fn);
  BinReport other({0.0, 1.0, 2.0});
  CHECK(code_of([&] { sum += other; }) == ErrorCode::Config);
}

TEST_CASE("report CSV layout") {
  BinReport a, b;
  a.bins[0] = {4, 1, 0};
  b.bins[6] = {1, 0, 1};
  const std::vector<MethodReport> reps{{"hahog", a}, {"cluster", b}};
  const std::string csv = report_csv(reps, 300.0);
  CHECK(csv == report_csv(reps, 300.0));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "# match_radius_mm=300");
  std::getline(in, line);
  CHECK(line == "bin_lo_rho,bin_hi_rho,bin_lo_rnn_m,bin_hi_rnn_m,tp,fp,fn,precision,recall,fscore,method");
  std::getline(in, line);
  CHECK(line == "0,0.5,0.797885,inf,4,1,0,0.8,1,0.888889,hahog");
  std::getline(in, line);
  CHECK(line == "0.5,1,0.56419,0.797885,0,0,0,,,,hahog");
  int rows = 2;
  std::string last;
  while (std::getline(in, line)) {
    ++rows;
    last = line;
  }
  CHECK(rows == 14);
  CHECK(last == "3,4,0.282095,0.325735,1,0,1,1,0.5,0.666667,cluster");

  oracle::TempDir dir;
  write_report(dir.path / "r.csv", reps, 300.0);
  CHECK(read_file(dir.path / "r.csv") == csv);
  const std::string plot = report_plot_data(reps);
  CHECK(plot.rfind("# method rho_mid rnn_mid_m precision recall fscore\n", 0) == 0);
  CHECK(plot.find("hahog 0.75 0.65147 nan nan nan") != std::string::npos);
}
