#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "core/detector.hpp"

namespace hahog {

struct ServiceConfig {
  std::filesystem::path corpus_dir;
  std::filesystem::path store_dir;
  std::filesystem::path model_path;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::uint64_t seed = 1;
  DetectorConfig detector;
  int threads = 1;
};

/// HTTP front end of the review loop: serves frames with detections from the loaded
/// model and turns submitted verdicts into stored samples.
class AnnotationService {
 public:
  explicit AnnotationService(ServiceConfig cfg);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Binds and serves on a background thread. Returns the bound port.
  int start();
  /// Blocks until the server stops.
  void wait();
  /// Stops serving and flushes the store manifest. Safe to call twice.
  void stop();
  int port() const;

  /// Replaces the model; cached detections of the old model stay keyed by its hash.
  void load_model(const std::filesystem::path& path);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hahog
