#include "core/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "core/errors.hpp"
#include "core/parallel.hpp"
#include "json.hpp"

namespace hahog {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kHalfPi = 0.5 * std::numbers::pi;
constexpr double kZeroNorm = 1e-12;

// Rotates (gx, gy) by -q*90 degrees into a > 0, b >= 0. Exact: only swaps and negations.
int reduce_quadrant(double gx, double gy, double& a, double& b) {
  if (gx > 0.0 && gy >= 0.0) {
    a = gx, b = gy;
    return 0;
  }
  if (gx <= 0.0 && gy > 0.0) {
    a = gy, b = -gx;
    return 1;
  }
  if (gx < 0.0 && gy <= 0.0) {
    a = -gx, b = -gy;
    return 2;
  }
  a = -gy, b = gx;
  return 3;
}

inline void pixel_gradient(const HeightField& f, int x, int y, double& gx, double& gy) {
  const int xl = x > 0 ? x - 1 : x;
  const int xr = x < f.width - 1 ? x + 1 : x;
  const int yu = y > 0 ? y - 1 : y;
  const int yd = y < f.height - 1 ? y + 1 : y;
  if (!f.is_valid(x, y) || !f.is_valid(xl, y) || !f.is_valid(xr, y) || !f.is_valid(x, yu) ||
      !f.is_valid(x, yd)) {
    gx = gy = 0.0;
    return;
  }
  gx = (f.at(xr, y) - f.at(xl, y)) / static_cast<double>(xr - xl);
  gy = (f.at(x, yd) - f.at(x, yu)) / static_cast<double>(yd - yu);
}

void check_cell_config(int cell_size, int n_bins) {
  if (n_bins < 4 || n_bins % 4 != 0) fail(ErrorCode::Config, "n_bins must be a positive multiple of 4");
  if (cell_size < 2) fail(ErrorCode::Config, "cell_size must be at least 2");
}

void normalize_l2(double* v, int n) {
  double sq = 0.0;
  for (int i = 0; i < n; ++i) sq += v[i] * v[i];
  const double norm = std::sqrt(sq);
  if (norm < kZeroNorm) {
    std::fill(v, v + n, 0.0);
    return;
  }
  for (int i = 0; i < n; ++i) v[i] /= norm;
}

}  // namespace

void FeatureConfig::validate() const {
  check_cell_config(cell_size, n_bins);
  if (window_cells < 1) fail(ErrorCode::Config, "window_cells must be >= 1");
  if (stride_cells < 1) fail(ErrorCode::Config, "stride_cells must be >= 1");
  if (n_height_bins < 0) fail(ErrorCode::Config, "n_height_bins must be >= 0");
  if (!(h_max_mm > 0.0)) fail(ErrorCode::Config, "h_max_mm must be positive");
}

std::string FeatureConfig::to_json() const {
  json j = {{"cell_size", cell_size},         {"n_bins", n_bins},
            {"window_cells", window_cells},   {"stride_cells", stride_cells},
            {"n_height_bins", n_height_bins}, {"h_max_mm", h_max_mm}};
  return j.dump();
}

FeatureConfig FeatureConfig::from_json(const std::string& text) {
  FeatureConfig c;
  try {
    json j = json::parse(text);
    c.cell_size = j.at("cell_size").get<int>();
    c.n_bins = j.at("n_bins").get<int>();
    c.window_cells = j.at("window_cells").get<int>();
    c.stride_cells = j.at("stride_cells").get<int>();
    c.n_height_bins = j.at("n_height_bins").get<int>();
    c.h_max_mm = j.at("h_max_mm").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad feature config: ") + e.what());
  }
  c.validate();
  return c;
}

Polar to_polar(double gx, double gy) {
  if (gx == 0.0 && gy == 0.0) return {0.0, 0.0};
  double a, b;
  const int q = reduce_quadrant(gx, gy, a, b);
  const double phi = q * kHalfPi + std::atan2(b, a);
  return {std::sqrt(gx * gx + gy * gy), phi < 2.0 * std::numbers::pi ? phi : std::nextafter(2.0 * std::numbers::pi, 0.0)};
}

int orientation_bin(double gx, double gy, int n_bins) {
  if (gx == 0.0 && gy == 0.0) return 0;
  double a, b;
  const int q = reduce_quadrant(gx, gy, a, b);
  const int per_quadrant = n_bins / 4;
  const int k = static_cast<int>(std::atan2(b, a) / (kTwoPi / n_bins));
  return q * per_quadrant + std::min(k, per_quadrant - 1);
}

GradientField compute_gradient(const HeightField& field) {
  if (field.width < 3 || field.height < 3) fail(ErrorCode::Dimension, "gradient needs at least 3x3 pixels");
  GradientField g;
  g.width = field.width;
  g.height = field.height;
  const std::size_t n = field.h.size();
  g.gx.resize(n);
  g.gy.resize(n);
  g.gr.resize(n);
  g.gphi.resize(n);
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      const std::size_t i = field.index(x, y);
      pixel_gradient(field, x, y, g.gx[i], g.gy[i]);
      const Polar p = to_polar(g.gx[i], g.gy[i]);
      g.gr[i] = p.r;
      g.gphi[i] = p.phi;
    }
  }
  return g;
}

CellGrid cell_histograms(const GradientField& grad, int cell_size, int n_bins) {
  check_cell_config(cell_size, n_bins);
  CellGrid grid;
  grid.cells_x = grad.width / cell_size;
  grid.cells_y = grad.height / cell_size;
  grid.cell_size = cell_size;
  grid.n_bins = n_bins;
  grid.histograms.assign(static_cast<std::size_t>(grid.cells_x) * grid.cells_y * n_bins, 0.0);
  for (int cy = 0; cy < grid.cells_y; ++cy) {
    for (int cx = 0; cx < grid.cells_x; ++cx) {
      double* hist = grid.histograms.data() + (static_cast<std::size_t>(cy) * grid.cells_x + cx) * n_bins;
      for (int y = cy * cell_size; y < (cy + 1) * cell_size; ++y) {
        for (int x = cx * cell_size; x < (cx + 1) * cell_size; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * grad.width + x;
          if (grad.gr[i] == 0.0) continue;
          hist[orientation_bin(grad.gx[i], grad.gy[i], n_bins)] += grad.gr[i];
        }
      }
      normalize_l2(hist, n_bins);
    }
  }
  return grid;
}

void window_descriptor(const CellGrid& grid, CellOrigin origin, const WindowSpec& spec,
                       std::vector<double>& out) {
  if (spec.window_cells < 1) fail(ErrorCode::Config, "window_cells must be >= 1");
  if (origin.cx < 0 || origin.cy < 0 || origin.cx + spec.window_cells > grid.cells_x ||
      origin.cy + spec.window_cells > grid.cells_y)
    fail(ErrorCode::Bounds, "window does not fit inside the cell grid");
  for (int j = 0; j < spec.window_cells; ++j) {
    for (int i = 0; i < spec.window_cells; ++i) {
      auto c = grid.cell(origin.cx + i, origin.cy + j);
      out.insert(out.end(), c.begin(), c.end());
    }
  }
}

std::vector<double> window_descriptor(const CellGrid& grid, CellOrigin origin, const WindowSpec& spec) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(spec.window_cells) * spec.window_cells * grid.n_bins);
  window_descriptor(grid, origin, spec, out);
  return out;
}

int height_bin(double h, int n_height_bins, double h_max) {
  if (h >= h_max) return n_height_bins - 1;
  if (h <= 0.0) return 0;
  const int b = static_cast<int>(h / (h_max / n_height_bins));
  return std::min(b, n_height_bins - 1);
}

std::vector<double> height_histogram(const HeightField& field, const PixelRect& rect, int n_height_bins,
                                     double h_max) {
  if (rect.x < 0 || rect.y < 0 || rect.w < 0 || rect.h < 0 || rect.x + rect.w > field.width ||
      rect.y + rect.h > field.height)
    fail(ErrorCode::Bounds, "height histogram rectangle outside field");
  std::vector<long> counts(static_cast<std::size_t>(n_height_bins), 0);
  long total = 0;
  for (int y = rect.y; y < rect.y + rect.h; ++y) {
    for (int x = rect.x; x < rect.x + rect.w; ++x) {
      if (!field.is_valid(x, y)) continue;
      ++counts[static_cast<std::size_t>(height_bin(field.at(x, y), n_height_bins, h_max))];
      ++total;
    }
  }
  std::vector<double> hist(counts.size(), 0.0);
  if (total == 0) return hist;
  for (std::size_t b = 0; b < counts.size(); ++b)
    hist[b] = static_cast<double>(counts[b]) / static_cast<double>(total);
  return hist;
}

std::vector<double> hahog(const CellGrid& grid, const HeightField& field, CellOrigin origin,
                          const FeatureConfig& cfg) {
  std::vector<double> out;
  out.reserve(cfg.length());
  window_descriptor(grid, origin, {cfg.window_cells, cfg.stride_cells}, out);
  if (cfg.n_height_bins > 0) {
    const int side = cfg.window_px();
    auto hh = height_histogram(field, {origin.cx * grid.cell_size, origin.cy * grid.cell_size, side, side},
                               cfg.n_height_bins, cfg.h_max_mm);
    out.insert(out.end(), hh.begin(), hh.end());
  }
  return out;
}

CellGrid precompute_frame_cells(const HeightField& field, const FeatureConfig& cfg, int threads) {
  cfg.validate();
  if (field.width < cfg.window_px() || field.height < cfg.window_px())
    fail(ErrorCode::Dimension, "frame is smaller than one detection window");
  if (field.width < 3 || field.height < 3) fail(ErrorCode::Dimension, "gradient needs at least 3x3 pixels");

  CellGrid grid;
  const int cs = cfg.cell_size;
  const int nb = cfg.n_bins;
  grid.cells_x = field.width / cs;
  grid.cells_y = field.height / cs;
  grid.cell_size = cs;
  grid.n_bins = nb;
  grid.histograms.assign(static_cast<std::size_t>(grid.cells_x) * grid.cells_y * nb, 0.0);

  // Same per-pixel arithmetic and accumulation order as cell_histograms(compute_gradient()),
  // fused so the frame gradient is never materialised.
  parallel_for(static_cast<std::size_t>(grid.cells_y), threads, [&](std::size_t row) {
    const int cy = static_cast<int>(row);
    for (int cx = 0; cx < grid.cells_x; ++cx) {
      double* hist = grid.histograms.data() + (static_cast<std::size_t>(cy) * grid.cells_x + cx) * nb;
      for (int y = cy * cs; y < (cy + 1) * cs; ++y) {
        for (int x = cx * cs; x < (cx + 1) * cs; ++x) {
          double gx, gy;
          pixel_gradient(field, x, y, gx, gy);
          const double gr = std::sqrt(gx * gx + gy * gy);
          if (gr == 0.0) continue;
          hist[orientation_bin(gx, gy, nb)] += gr;
        }
      }
      normalize_l2(hist, nb);
    }
  });
  return grid;
}

OriginLattice window_lattice(const CellGrid& grid, const FeatureConfig& cfg) {
  OriginLattice lat;
  lat.stride = cfg.stride_cells;
  if (grid.cells_x >= cfg.window_cells) lat.nx = (grid.cells_x - cfg.window_cells) / cfg.stride_cells + 1;
  if (grid.cells_y >= cfg.window_cells) lat.ny = (grid.cells_y - cfg.window_cells) / cfg.stride_cells + 1;
  return lat;
}

HeightCellIndex::HeightCellIndex(const HeightField& field, const FeatureConfig& cfg)
    : cells_x_(field.width / cfg.cell_size), cells_y_(field.height / cfg.cell_size), n_bins_(cfg.n_height_bins) {
  const int slots = n_bins_ + 1;
  const int cs = cfg.cell_size;
  const std::size_t stride_row = static_cast<std::size_t>(cells_x_ + 1) * slots;
  sat_.assign(static_cast<std::size_t>(cells_y_ + 1) * stride_row, 0);
  std::vector<std::int32_t> cell(static_cast<std::size_t>(slots));
  for (int cy = 0; cy < cells_y_; ++cy) {
    for (int cx = 0; cx < cells_x_; ++cx) {
      std::fill(cell.begin(), cell.end(), 0);
      for (int y = cy * cs; y < (cy + 1) * cs; ++y) {
        for (int x = cx * cs; x < (cx + 1) * cs; ++x) {
          if (!field.is_valid(x, y)) continue;
          ++cell[static_cast<std::size_t>(height_bin(field.at(x, y), n_bins_, cfg.h_max_mm))];
          ++cell[static_cast<std::size_t>(n_bins_)];
        }
      }
      std::int32_t* dst = sat_.data() + (cy + 1) * stride_row + static_cast<std::size_t>(cx + 1) * slots;
      const std::int32_t* up = dst - stride_row;
      const std::int32_t* left = dst - slots;
      const std::int32_t* diag = up - slots;
      for (int s = 0; s < slots; ++s) dst[s] = cell[s] + up[s] + left[s] - diag[s];
    }
  }
}

void HeightCellIndex::window_histogram(CellOrigin origin, int window_cells, std::span<double> out) const {
  const int slots = n_bins_ + 1;
  const std::size_t stride_row = static_cast<std::size_t>(cells_x_ + 1) * slots;
  auto at = [&](int cx, int cy) { return sat_.data() + cy * stride_row + static_cast<std::size_t>(cx) * slots; };
  const std::int32_t* a = at(origin.cx, origin.cy);
  const std::int32_t* b = at(origin.cx + window_cells, origin.cy);
  const std::int32_t* c = at(origin.cx, origin.cy + window_cells);
  const std::int32_t* d = at(origin.cx + window_cells, origin.cy + window_cells);
  const std::int32_t total = d[n_bins_] - b[n_bins_] - c[n_bins_] + a[n_bins_];
  for (int s = 0; s < n_bins_; ++s) {
    const std::int32_t count = d[s] - b[s] - c[s] + a[s];
    out[static_cast<std::size_t>(s)] = total == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total);
  }
}

FrameFeatures::FrameFeatures(const HeightField& field, const FeatureConfig& cfg, int threads)
    : cfg_(cfg), grid_(precompute_frame_cells(field, cfg, threads)), lattice_(window_lattice(grid_, cfg)) {
  if (cfg.n_height_bins > 0) heights_.emplace(field, cfg);
}

template <typename T>
void FrameFeatures::gather(int i, int j, T* dst) const {
  const CellOrigin o = lattice_.origin(i, j);
  const int wc = cfg_.window_cells;
  const int nb = cfg_.n_bins;
  for (int cy = 0; cy < wc; ++cy)
    for (int cx = 0; cx < wc; ++cx) {
      auto c = grid_.cell(o.cx + cx, o.cy + cy);
      for (int b = 0; b < nb; ++b) *dst++ = static_cast<T>(c[static_cast<std::size_t>(b)]);
    }
  if (heights_) {
    double hh[64];
    std::vector<double> big;
    double* h = hh;
    if (cfg_.n_height_bins > 64) {
      big.resize(static_cast<std::size_t>(cfg_.n_height_bins));
      h = big.data();
    }
    heights_->window_histogram(o, wc, {h, static_cast<std::size_t>(cfg_.n_height_bins)});
    for (int b = 0; b < cfg_.n_height_bins; ++b) *dst++ = static_cast<T>(h[b]);
  }
}

void FrameFeatures::window(int i, int j, double* dst) const { gather(i, j, dst); }
void FrameFeatures::window(int i, int j, float* dst) const { gather(i, j, dst); }

std::vector<double> patch_descriptor(const HeightField& patch, const FeatureConfig& cfg) {
  cfg.validate();
  if (patch.width != cfg.window_px() || patch.height != cfg.window_px())
    fail(ErrorCode::Dimension, "patch must be exactly one window in size");
  const CellGrid grid = cell_histograms(compute_gradient(patch), cfg.cell_size, cfg.n_bins);
  return hahog(grid, patch, {0, 0}, cfg);
}

}  // namespace hahog
