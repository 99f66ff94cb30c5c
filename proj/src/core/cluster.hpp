#pragma once

#include <vector>

#include "core/depth.hpp"
#include "core/detector.hpp"

namespace hahog {

struct ClusterConfig {
  double h_min_mm = 1000.0;
  double linkage_cutoff_px = 60.0;
  int subsample_step = 3;

  void validate() const;
};

using Cluster = std::vector<Point>;

/// Valid pixels with height >= h_min on the lattice of every `step`-th row and column.
std::vector<Point> foreground(const HeightField& field, double h_min, int step);

/// Agglomerative clustering with complete linkage. Repeatedly merges the pair of clusters
/// with the smallest maximum inter-point distance (lowest index pair on ties) while that
/// distance is <= cutoff. Clusters keep the order of their first point.
std::vector<Cluster> complete_linkage(const std::vector<Point>& points, double cutoff);

/// Cluster centroids, rounded to the nearest pixel, with alpha = 1.
DetectionSet cluster_detections(const std::vector<Cluster>& clusters);

DetectionSet cluster_detect(const DepthFrame& frame, const Calibration& calib, const ClusterConfig& cfg);

}  // namespace hahog
