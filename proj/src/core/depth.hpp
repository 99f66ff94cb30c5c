#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hahog {

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Overhead depth raster in millimetres. 0 marks an invalid pixel.
struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> depth;  // row-major, width * height
  std::string frame_id;

  std::uint16_t at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
  bool contains(Point p) const { return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height; }
  friend bool operator==(const DepthFrame&, const DepthFrame&) = default;
};

struct Calibration {
  double sensor_height_mm = 3000.0;
  double scale_mm_per_px = 10.0;

  void validate() const;
  friend bool operator==(const Calibration&, const Calibration&) = default;
};

/// Height above the floor in millimetres plus a validity mask.
struct HeightField {
  int width = 0;
  int height = 0;
  std::vector<double> h;
  std::vector<std::uint8_t> valid;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  double at(int x, int y) const { return h[index(x, y)]; }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }

  /// Copy of the w x h block whose top-left pixel is (x, y). Throws on out-of-bounds.
  HeightField crop(int x, int y, int crop_w, int crop_h) const;
};

struct AnnotationSet {
  std::string frame_id;
  std::vector<Point> points;
};

/// Raster plus the calibration found in its JSON sidecar.
struct FrameRecord {
  DepthFrame frame;
  Calibration calib;
};

std::filesystem::path sidecar_path(const std::filesystem::path& raster);

// Raster: "P5\n<w> <h>\n65535\n" followed by big-endian 16-bit samples.
DepthFrame decode_raster(const std::string& bytes);
std::string encode_raster(const DepthFrame& frame);

FrameRecord load_frame(const std::filesystem::path& path);
void save_frame(const DepthFrame& frame, const Calibration& calib, const std::filesystem::path& path);

HeightField to_height_field(const DepthFrame& frame, const Calibration& calib);

std::vector<AnnotationSet> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationSet>& sets);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace hahog
