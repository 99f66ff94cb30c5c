#include "hahog/hahog.h"

#include <cstring>
#include <mutex>
#include <string>

#include "core/errors.hpp"
#include "core/pipeline.hpp"
#include "core/service.hpp"

using namespace hahog;
using nlohmann::json;

struct hahog_frame {
  DepthFrame frame;
  Calibration calib;
};

struct hahog_model {
  MlpModel model;
};

struct hahog_detections {
  DetectionSet set;
};

struct hahog_service {
  std::unique_ptr<AnnotationService> service;
};

namespace {

thread_local std::string g_last_error;

std::mutex g_log_mutex;
hahog_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

Log logger() {
  return [](const std::string& msg) {
    std::lock_guard lock(g_log_mutex);
    if (g_log_fn) g_log_fn(msg.c_str(), g_log_user);
  };
}

template <typename Fn>
hahog_status guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return HAHOG_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<hahog_status>(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return HAHOG_E_FORMAT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return HAHOG_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HAHOG_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return HAHOG_E_INTERNAL;
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorCode::InvalidArgument, std::string(what) + " must not be null");
}

Settings settings(const char* settings_json) {
  Settings s;
  if (settings_json && *settings_json) s.apply(json::parse(settings_json));
  return s;
}

void put(char** out, const json& j) {
  if (out) *out = dup(j.dump());
}

}  // namespace

extern "C" {

const char* hahog_version(void) { return "0.1.0"; }

const char* hahog_status_name(hahog_status status) {
  switch (status) {
    case HAHOG_OK: return "ok";
    case HAHOG_E_INVALID_ARGUMENT: return "invalid-argument";
    case HAHOG_E_IO: return "io";
    case HAHOG_E_MALFORMED_HEADER: return "malformed-header";
    case HAHOG_E_TRUNCATED_PAYLOAD: return "truncated-payload";
    case HAHOG_E_MISSING_SIDECAR: return "missing-sidecar";
    case HAHOG_E_FORMAT: return "format";
    case HAHOG_E_CONFIG: return "config";
    case HAHOG_E_DIMENSION: return "dimension";
    case HAHOG_E_BOUNDS: return "bounds";
    case HAHOG_E_NOT_FOUND: return "not-found";
    case HAHOG_E_CONFLICT: return "conflict";
    case HAHOG_E_EMPTY_CLASS: return "empty-class";
    case HAHOG_E_GENERATION: return "generation";
    case HAHOG_E_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* hahog_last_error(void) { return g_last_error.c_str(); }

void hahog_string_free(char* s) { std::free(s); }

void hahog_set_log(hahog_log_fn fn, void* user) {
  std::lock_guard lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

hahog_status hahog_frame_load(const char* path, hahog_frame** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    FrameRecord rec = load_frame(path);
    *out = new hahog_frame{std::move(rec.frame), rec.calib};
  });
}

hahog_status hahog_frame_create(int width, int height, const uint16_t* depth, double sensor_height_mm,
                                double scale_mm_per_px, hahog_frame** out) {
  return guard([&] {
    need(depth, "depth");
    need(out, "out");
    if (width <= 0 || height <= 0) fail(ErrorCode::Dimension, "frame size must be positive");
    Calibration c{sensor_height_mm, scale_mm_per_px};
    c.validate();
    DepthFrame f;
    f.width = width;
    f.height = height;
    f.depth.assign(depth, depth + static_cast<std::size_t>(width) * height);
    f.frame_id = "frame";
    *out = new hahog_frame{std::move(f), c};
  });
}

int hahog_frame_width(const hahog_frame* frame) { return frame ? frame->frame.width : 0; }
int hahog_frame_height(const hahog_frame* frame) { return frame ? frame->frame.height : 0; }
const uint16_t* hahog_frame_data(const hahog_frame* frame) { return frame ? frame->frame.depth.data() : nullptr; }
void hahog_frame_free(hahog_frame* frame) { delete frame; }

hahog_status hahog_model_load(const char* path, hahog_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new hahog_model{load_model(path)};
  });
}

hahog_status hahog_model_hash(const hahog_model* model, char** out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    *out = dup(model_hash(model->model));
  });
}

size_t hahog_model_feature_length(const hahog_model* model) {
  return model ? static_cast<size_t>(model->model.input_dim()) : 0;
}

hahog_status hahog_model_score(const hahog_model* model, const double* features, size_t n, double* alpha) {
  return guard([&] {
    need(model, "model");
    need(features, "features");
    need(alpha, "alpha");
    if (n != static_cast<size_t>(model->model.input_dim()))
      fail(ErrorCode::Dimension, "expected " + std::to_string(model->model.input_dim()) + " features");
    *alpha = model->model.forward({features, n});
  });
}

void hahog_model_free(hahog_model* model) { delete model; }

hahog_status hahog_detect(const hahog_model* model, const hahog_frame* frame, double threshold, double nms_radius_px,
                          int threads, hahog_detections** out) {
  return guard([&] {
    need(model, "model");
    need(frame, "frame");
    need(out, "out");
    DetectorConfig cfg{threshold, nms_radius_px};
    *out = new hahog_detections{detect(frame->frame, frame->calib, model->model, cfg, threads < 1 ? 1 : threads)};
  });
}

size_t hahog_detections_count(const hahog_detections* d) { return d ? d->set.detections.size() : 0; }

hahog_status hahog_detections_get(const hahog_detections* d, size_t i, int* x, int* y, double* alpha) {
  return guard([&] {
    need(d, "detections");
    if (i >= d->set.detections.size()) fail(ErrorCode::Bounds, "detection index out of range");
    const Candidate& c = d->set.detections[i];
    if (x) *x = c.position.x;
    if (y) *y = c.position.y;
    if (alpha) *alpha = c.alpha;
  });
}

void hahog_detections_free(hahog_detections* d) { delete d; }

hahog_status hahog_settings_effective(const char* settings_json, char** out_json) {
  return guard([&] {
    need(out_json, "out_json");
    const Settings s = settings(settings_json);
    s.validate();
    put(out_json, s.effective());
  });
}

hahog_status hahog_synth(const char* settings_json, int frames, const char* out_dir, char** result_json) {
  return guard([&] {
    need(out_dir, "out_dir");
    put(result_json, run_synth(settings(settings_json), frames, out_dir, logger()));
  });
}

hahog_status hahog_train(const char* settings_json, const char* method, const char* corpus_dir, const char* store_dir,
                         const char* model_out, char** result_json) {
  return guard([&] {
    need(store_dir, "store_dir");
    need(model_out, "model_out");
    put(result_json, run_train(settings(settings_json), method ? method : "hahog", corpus_dir ? corpus_dir : "",
                               store_dir, model_out, logger()));
  });
}

hahog_status hahog_detect_corpus(const char* settings_json, const char* method, const char* model_path,
                                 const char* input, const char* out_path, char** result_json) {
  return guard([&] {
    need(input, "input");
    need(out_path, "out_path");
    const std::string m = method ? method : "hahog";
    if (m != "cluster") need(model_path, "model_path");
    put(result_json, run_detect(settings(settings_json), m, model_path ? model_path : "", input, out_path, logger()));
  });
}

hahog_status hahog_eval(const char* settings_json, const char* corpus_dir, const char* const* detection_files,
                        size_t n_files, const char* out_csv, char** result_json) {
  return guard([&] {
    need(corpus_dir, "corpus_dir");
    need(out_csv, "out_csv");
    if (n_files > 0) need(detection_files, "detection_files");
    std::vector<std::filesystem::path> files;
    for (size_t i = 0; i < n_files; ++i) {
      need(detection_files[i], "detection file");
      files.emplace_back(detection_files[i]);
    }
    put(result_json, run_eval(settings(settings_json), corpus_dir, files, out_csv, logger()));
  });
}

hahog_status hahog_bench(const char* settings_json, const char* model_path, const char* frame_path, int repetitions,
                         char** result_json) {
  return guard([&] {
    need(model_path, "model_path");
    need(frame_path, "frame_path");
    put(result_json, run_bench(settings(settings_json), model_path, frame_path, repetitions, logger()));
  });
}

hahog_status hahog_dump_features(const char* settings_json, const char* method, const char* frame_path, int x, int y,
                                 char** result_json) {
  return guard([&] {
    need(frame_path, "frame_path");
    put(result_json, json(dump_features(settings(settings_json), method ? method : "hahog", frame_path, x, y)));
  });
}

hahog_status hahog_service_start(const char* settings_json, const char* corpus_dir, const char* store_dir,
                                 const char* model_path, const char* host, int port, hahog_service** out,
                                 int* bound_port) {
  return guard([&] {
    need(corpus_dir, "corpus_dir");
    need(store_dir, "store_dir");
    need(model_path, "model_path");
    need(out, "out");
    const Settings s = settings(settings_json);
    s.validate();
    ServiceConfig cfg;
    cfg.corpus_dir = corpus_dir;
    cfg.store_dir = store_dir;
    cfg.model_path = model_path;
    if (host) cfg.host = host;
    cfg.port = port;
    cfg.seed = s.seed;
    cfg.detector = s.detector;
    cfg.threads = s.threads;
    auto svc = std::make_unique<AnnotationService>(cfg);
    const int p = svc->start();
    if (bound_port) *bound_port = p;
    *out = new hahog_service{std::move(svc)};
  });
}

hahog_status hahog_service_stop(hahog_service* service) {
  return guard([&] {
    need(service, "service");
    service->service->stop();
  });
}

void hahog_service_wait(hahog_service* service) {
  if (service) service->service->wait();
}

void hahog_service_free(hahog_service* service) { delete service; }

}  // extern "C"
