#include "core/depth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"
#include "json.hpp"

namespace hahog {

namespace fs = std::filesystem;
using nlohmann::json;

void Calibration::validate() const {
  if (!(sensor_height_mm > 0.0) || !std::isfinite(sensor_height_mm))
    fail(ErrorCode::Config, "sensor_height_mm must be positive");
  if (!(scale_mm_per_px > 0.0) || !std::isfinite(scale_mm_per_px))
    fail(ErrorCode::Config, "scale_mm_per_px must be positive");
}

HeightField HeightField::crop(int x, int y, int crop_w, int crop_h) const {
  if (x < 0 || y < 0 || crop_w <= 0 || crop_h <= 0 || x + crop_w > width || y + crop_h > height)
    fail(ErrorCode::Bounds, "crop rectangle outside height field");
  HeightField out;
  out.width = crop_w;
  out.height = crop_h;
  out.h.resize(static_cast<std::size_t>(crop_w) * crop_h);
  out.valid.resize(out.h.size());
  for (int r = 0; r < crop_h; ++r) {
    const std::size_t src = index(x, y + r);
    const std::size_t dst = static_cast<std::size_t>(r) * crop_w;
    std::copy_n(h.begin() + src, crop_w, out.h.begin() + dst);
    std::copy_n(valid.begin() + src, crop_w, out.valid.begin() + dst);
  }
  return out;
}

fs::path sidecar_path(const fs::path& raster) {
  fs::path p = raster;
  p.replace_extension(".json");
  return p;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::Io, "cannot rename into " + path.string() + ": " + ec.message());
}

namespace {

// Reads one whitespace-delimited unsigned integer of the PGM header.
bool read_header_int(const std::string& bytes, std::size_t& pos, long& value) {
  while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  std::size_t start = pos;
  value = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > 1'000'000) return false;
    ++pos;
  }
  return pos > start;
}

}  // namespace

DepthFrame decode_raster(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    fail(ErrorCode::MalformedHeader, "raster does not start with P5");
  std::size_t pos = 2;
  long w = 0, h = 0, maxval = 0;
  if (!read_header_int(bytes, pos, w) || !read_header_int(bytes, pos, h) ||
      !read_header_int(bytes, pos, maxval))
    fail(ErrorCode::MalformedHeader, "unreadable raster dimensions");
  if (w <= 0 || h <= 0) fail(ErrorCode::MalformedHeader, "raster dimensions must be positive");
  if (maxval != 65535) fail(ErrorCode::MalformedHeader, "raster must be 16-bit (maxval 65535)");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    fail(ErrorCode::MalformedHeader, "missing separator after raster header");
  ++pos;

  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - pos != 2 * n)
    fail(ErrorCode::TruncatedPayload, "raster payload has " + std::to_string(bytes.size() - pos) +
                                          " bytes, expected " + std::to_string(2 * n));
  DepthFrame frame;
  frame.width = static_cast<int>(w);
  frame.height = static_cast<int>(h);
  frame.depth.resize(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < n; ++i)
    frame.depth[i] = static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
  return frame;
}

std::string encode_raster(const DepthFrame& frame) {
  std::string header = "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n65535\n";
  std::string out = header;
  out.resize(header.size() + 2 * frame.depth.size());
  auto* p = reinterpret_cast<unsigned char*>(out.data() + header.size());
  for (std::size_t i = 0; i < frame.depth.size(); ++i) {
    p[2 * i] = static_cast<unsigned char>(frame.depth[i] >> 8);
    p[2 * i + 1] = static_cast<unsigned char>(frame.depth[i] & 0xff);
  }
  return out;
}

FrameRecord load_frame(const fs::path& path) {
  FrameRecord rec;
  rec.frame = decode_raster(read_file(path));
  const fs::path side = sidecar_path(path);
  if (!fs::exists(side)) fail(ErrorCode::MissingSidecar, "missing sidecar " + side.string());
  json j;
  try {
    j = json::parse(read_file(side));
    rec.frame.frame_id = j.at("frame_id").get<std::string>();
    rec.calib.sensor_height_mm = j.at("sensor_height_mm").get<double>();
    rec.calib.scale_mm_per_px = j.at("scale_mm_per_px").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, "bad sidecar " + side.string() + ": " + e.what());
  }
  rec.calib.validate();
  return rec;
}

void save_frame(const DepthFrame& frame, const Calibration& calib, const fs::path& path) {
  if (frame.width <= 0 || frame.height <= 0 ||
      frame.depth.size() != static_cast<std::size_t>(frame.width) * frame.height)
    fail(ErrorCode::Dimension, "frame dimensions do not match its payload");
  write_file_atomic(path, encode_raster(frame));
  json side = {{"frame_id", frame.frame_id},
               {"sensor_height_mm", calib.sensor_height_mm},
               {"scale_mm_per_px", calib.scale_mm_per_px}};
  write_file_atomic(sidecar_path(path), side.dump(2) + "\n");
}

HeightField to_height_field(const DepthFrame& frame, const Calibration& calib) {
  calib.validate();
  HeightField f;
  f.width = frame.width;
  f.height = frame.height;
  f.h.assign(frame.depth.size(), 0.0);
  f.valid.assign(frame.depth.size(), 0);
  for (std::size_t i = 0; i < frame.depth.size(); ++i) {
    const std::uint16_t d = frame.depth[i];
    if (d == 0) continue;
    f.valid[i] = 1;
    f.h[i] = std::max(0.0, calib.sensor_height_mm - static_cast<double>(d));
  }
  return f;
}

std::vector<AnnotationSet> read_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<AnnotationSet> sets;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      AnnotationSet s;
      s.frame_id = j.at("frame_id").get<std::string>();
      for (const auto& p : j.at("points")) s.points.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
      sets.push_back(std::move(s));
    } catch (const json::exception& e) {
      fail(ErrorCode::Format, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return sets;
}

void write_annotations(const fs::path& path, const std::vector<AnnotationSet>& sets) {
  std::string out;
  for (const auto& s : sets) {
    json pts = json::array();
    for (const auto& p : s.points) pts.push_back({p.x, p.y});
    out += json{{"frame_id", s.frame_id}, {"points", pts}}.dump() + "\n";
  }
  write_file_atomic(path, out);
}

}  // namespace hahog
