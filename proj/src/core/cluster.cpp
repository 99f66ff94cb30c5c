#include "core/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "core/errors.hpp"

namespace hahog {

void ClusterConfig::validate() const {
  if (!(h_min_mm > 0.0)) fail(ErrorCode::Config, "h_min must be positive");
  if (!(linkage_cutoff_px > 0.0)) fail(ErrorCode::Config, "linkage cutoff must be positive");
  if (subsample_step < 1) fail(ErrorCode::Config, "subsample step must be positive");
}

std::vector<Point> foreground(const HeightField& field, double h_min, int step) {
  if (step < 1) fail(ErrorCode::Config, "subsample step must be positive");
  std::vector<Point> pts;
  for (int y = 0; y < field.height; y += step)
    for (int x = 0; x < field.width; x += step)
      if (field.is_valid(x, y) && field.at(x, y) >= h_min) pts.push_back({x, y});
  return pts;
}

std::vector<Cluster> complete_linkage(const std::vector<Point>& points, double cutoff) {
  const std::size_t n = points.size();
  std::vector<Cluster> out;
  if (n == 0) return out;

  // Squared distances are exact integers; complete linkage is the max of them.
  std::vector<std::int64_t> d(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::int64_t dx = points[i].x - points[j].x;
      const std::int64_t dy = points[i].y - points[j].y;
      d[i * n + j] = d[j * n + i] = dx * dx + dy * dy;
    }

  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();
  const std::int64_t limit = static_cast<std::int64_t>(std::floor(cutoff * cutoff + 1e-9));
  std::vector<char> active(n, 1);
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};

  std::vector<std::size_t> nn(n, n);
  std::vector<std::int64_t> nn_dist(n, kInf);
  auto refresh = [&](std::size_t r) {
    nn[r] = n;
    nn_dist[r] = kInf;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == r || !active[k]) continue;
      if (d[r * n + k] < nn_dist[r]) {
        nn_dist[r] = d[r * n + k];
        nn[r] = k;
      }
    }
  };
  for (std::size_t r = 0; r < n; ++r) refresh(r);

  for (std::size_t remaining = n; remaining > 1; --remaining) {
    // Lowest (distance, min index, max index) over the per-row nearest neighbours.
    std::size_t bi = n, bj = n;
    std::int64_t best = kInf;
    for (std::size_t r = 0; r < n; ++r) {
      if (!active[r] || nn[r] == n) continue;
      const std::size_t lo = std::min(r, nn[r]), hi = std::max(r, nn[r]);
      if (nn_dist[r] < best || (nn_dist[r] == best && (lo < bi || (lo == bi && hi < bj)))) {
        best = nn_dist[r];
        bi = lo;
        bj = hi;
      }
    }
    if (best > limit) break;

    active[bj] = 0;
    members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
    members[bj].clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi) continue;
      const std::int64_t merged = std::max(d[bi * n + k], d[bj * n + k]);
      d[bi * n + k] = d[k * n + bi] = merged;
    }
    // Linkage distances only grow, so only rows that pointed at the merged pair can change.
    for (std::size_t k = 0; k < n; ++k)
      if (active[k] && (k == bi || nn[k] == bi || nn[k] == bj)) refresh(k);
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    std::sort(members[i].begin(), members[i].end());
    Cluster c;
    for (std::size_t m : members[i]) c.push_back(points[m]);
    out.push_back(std::move(c));
  }
  return out;
}

DetectionSet cluster_detections(const std::vector<Cluster>& clusters) {
  DetectionSet set;
  set.method = "cluster";
  for (const Cluster& c : clusters) {
    if (c.empty()) continue;
    double sx = 0.0, sy = 0.0;
    for (const Point& p : c) {
      sx += p.x;
      sy += p.y;
    }
    const double n = static_cast<double>(c.size());
    set.detections.push_back({{static_cast<int>(std::lround(sx / n)), static_cast<int>(std::lround(sy / n))}, 1.0});
  }
  return set;
}

DetectionSet cluster_detect(const DepthFrame& frame, const Calibration& calib, const ClusterConfig& cfg) {
  cfg.validate();
  const HeightField field = to_height_field(frame, calib);
  DetectionSet set =
      cluster_detections(complete_linkage(foreground(field, cfg.h_min_mm, cfg.subsample_step), cfg.linkage_cutoff_px));
  set.frame_id = frame.frame_id;
  return set;
}

}  // namespace hahog
