#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/depth.hpp"

namespace hahog {

/// Feature-extraction settings. Carried inside every model file so a model
/// always knows which descriptor it was trained on.
struct FeatureConfig {
  int cell_size = 6;
  int n_bins = 8;
  int window_cells = 11;
  int stride_cells = 1;
  int n_height_bins = 16;  // 0 gives plain HOG
  double h_max_mm = 2200.0;

  void validate() const;
  int window_px() const { return window_cells * cell_size; }
  std::size_t hog_length() const {
    return static_cast<std::size_t>(window_cells) * window_cells * n_bins;
  }
  std::size_t length() const { return hog_length() + static_cast<std::size_t>(n_height_bins); }

  std::string to_json() const;
  static FeatureConfig from_json(const std::string& text);
  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

struct WindowSpec {
  int window_cells = 11;
  int stride_cells = 1;
};

struct CellOrigin {
  int cx = 0;
  int cy = 0;
};

struct PixelRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

struct Polar {
  double r = 0.0;
  double phi = 0.0;
};

struct GradientField {
  int width = 0;
  int height = 0;
  std::vector<double> gx, gy, gr, gphi;
};

/// Per-cell orientation histograms for a whole frame, row-major over cells.
struct CellGrid {
  int cells_x = 0;
  int cells_y = 0;
  int cell_size = 0;
  int n_bins = 0;
  std::vector<double> histograms;

  std::span<const double> cell(int cx, int cy) const {
    return {histograms.data() + (static_cast<std::size_t>(cy) * cells_x + cx) * n_bins,
            static_cast<std::size_t>(n_bins)};
  }
};

/// gr = |g|, gphi in [0, 2*pi). (0, 0) maps to (0, 0).
Polar to_polar(double gx, double gy);

/// Signed orientation bin, floor(phi / (2*pi / n_bins)). The quadrant is decided from
/// the signs alone, so rotating (gx, gy) by 90 degrees shifts the bin by exactly n_bins / 4.
int orientation_bin(double gx, double gy, int n_bins);

/// Central differences inside, one-sided differences on the border. A pixel whose
/// stencil (itself or a neighbour it reads) is invalid gets a zero gradient.
GradientField compute_gradient(const HeightField& field);

CellGrid cell_histograms(const GradientField& grad, int cell_size, int n_bins);

/// Appends the window's cell histograms in row-major cell order.
void window_descriptor(const CellGrid& grid, CellOrigin origin, const WindowSpec& spec,
                       std::vector<double>& out);
std::vector<double> window_descriptor(const CellGrid& grid, CellOrigin origin, const WindowSpec& spec);

/// L1-normalised histogram of valid heights over [0, h_max]; values >= h_max go to the
/// top bin. An all-invalid rectangle gives the zero vector.
std::vector<double> height_histogram(const HeightField& field, const PixelRect& rect, int n_height_bins,
                                     double h_max);

int height_bin(double h, int n_height_bins, double h_max);

std::vector<double> hahog(const CellGrid& grid, const HeightField& field, CellOrigin origin,
                          const FeatureConfig& cfg);

/// Cell histograms over the whole frame, computed once and shared by every window.
CellGrid precompute_frame_cells(const HeightField& field, const FeatureConfig& cfg, int threads = 1);

/// Window origins on the stride lattice: count along x and y.
struct OriginLattice {
  int nx = 0;
  int ny = 0;
  int stride = 1;
  CellOrigin origin(int i, int j) const { return {i * stride, j * stride}; }
};
OriginLattice window_lattice(const CellGrid& grid, const FeatureConfig& cfg);

/// Window-level height-bin counts built from per-cell counts with a summed-area table,
/// so each window histogram costs O(n_height_bins).
class HeightCellIndex {
 public:
  HeightCellIndex(const HeightField& field, const FeatureConfig& cfg);
  void window_histogram(CellOrigin origin, int window_cells, std::span<double> out) const;

 private:
  int cells_x_ = 0;
  int cells_y_ = 0;
  int n_bins_ = 0;
  std::vector<std::int32_t> sat_;  // (cells_y + 1) x (cells_x + 1) x (n_bins + 1); last slot = valid count
};

/// Shared-cell descriptors of every window on the stride lattice of one frame. Cell
/// histograms and height counts are computed once; a window only gathers them.
class FrameFeatures {
 public:
  FrameFeatures(const HeightField& field, const FeatureConfig& cfg, int threads = 1);

  const FeatureConfig& config() const { return cfg_; }
  const OriginLattice& lattice() const { return lattice_; }
  const CellGrid& grid() const { return grid_; }

  /// Writes the descriptor of lattice window (i, j) into dst (config().length() values).
  void window(int i, int j, double* dst) const;
  void window(int i, int j, float* dst) const;

 private:
  template <typename T>
  void gather(int i, int j, T* dst) const;

  FeatureConfig cfg_;
  CellGrid grid_;
  OriginLattice lattice_;
  std::optional<HeightCellIndex> heights_;
};

/// Descriptor of a standalone window-sized patch (training samples).
std::vector<double> patch_descriptor(const HeightField& patch, const FeatureConfig& cfg);

}  // namespace hahog
