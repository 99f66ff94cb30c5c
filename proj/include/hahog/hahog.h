#ifndef HAHOG_HAHOG_H
#define HAHOG_HAHOG_H

#include <stddef.h>
#include <stdint.h>

#if defined(HAHOG_BUILDING_LIBRARY)
#define HAHOG_API __attribute__((visibility("default")))
#else
#define HAHOG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hahog_status {
  HAHOG_OK = 0,
  HAHOG_E_INVALID_ARGUMENT = 1,
  HAHOG_E_IO = 2,
  HAHOG_E_MALFORMED_HEADER = 3,
  HAHOG_E_TRUNCATED_PAYLOAD = 4,
  HAHOG_E_MISSING_SIDECAR = 5,
  HAHOG_E_FORMAT = 6,
  HAHOG_E_CONFIG = 7,
  HAHOG_E_DIMENSION = 8,
  HAHOG_E_BOUNDS = 9,
  HAHOG_E_NOT_FOUND = 10,
  HAHOG_E_CONFLICT = 11,
  HAHOG_E_EMPTY_CLASS = 12,
  HAHOG_E_GENERATION = 13,
  HAHOG_E_INTERNAL = 14
} hahog_status;

HAHOG_API const char* hahog_version(void);
HAHOG_API const char* hahog_status_name(hahog_status status);
/* Message of the last failed call on this thread; empty after a success. */
HAHOG_API const char* hahog_last_error(void);
/* Frees strings returned through char** out-parameters. */
HAHOG_API void hahog_string_free(char* s);

typedef void (*hahog_log_fn)(const char* message, void* user);
/* Progress messages of the pipeline calls. NULL disables logging. */
HAHOG_API void hahog_set_log(hahog_log_fn fn, void* user);

/* Frames: 16-bit depth in millimetres (0 = invalid) plus calibration. */
typedef struct hahog_frame hahog_frame;
HAHOG_API hahog_status hahog_frame_load(const char* path, hahog_frame** out);
HAHOG_API hahog_status hahog_frame_create(int width, int height, const uint16_t* depth, double sensor_height_mm,
                                          double scale_mm_per_px, hahog_frame** out);
HAHOG_API int hahog_frame_width(const hahog_frame* frame);
HAHOG_API int hahog_frame_height(const hahog_frame* frame);
HAHOG_API const uint16_t* hahog_frame_data(const hahog_frame* frame);
HAHOG_API void hahog_frame_free(hahog_frame* frame);

typedef struct hahog_model hahog_model;
HAHOG_API hahog_status hahog_model_load(const char* path, hahog_model** out);
HAHOG_API hahog_status hahog_model_hash(const hahog_model* model, char** out);
HAHOG_API size_t hahog_model_feature_length(const hahog_model* model);
/* Scores one feature vector of hahog_model_feature_length() values. */
HAHOG_API hahog_status hahog_model_score(const hahog_model* model, const double* features, size_t n, double* alpha);
HAHOG_API void hahog_model_free(hahog_model* model);

typedef struct hahog_detections hahog_detections;
/* nms_radius_px <= 0 selects the default radius. */
HAHOG_API hahog_status hahog_detect(const hahog_model* model, const hahog_frame* frame, double threshold,
                                    double nms_radius_px, int threads, hahog_detections** out);
HAHOG_API size_t hahog_detections_count(const hahog_detections* d);
HAHOG_API hahog_status hahog_detections_get(const hahog_detections* d, size_t i, int* x, int* y, double* alpha);
HAHOG_API void hahog_detections_free(hahog_detections* d);

/* Pipeline calls. `settings_json` is a flat JSON object of setting key -> value (NULL for
 * defaults); results come back as JSON strings to release with hahog_string_free. */
HAHOG_API hahog_status hahog_settings_effective(const char* settings_json, char** out_json);
HAHOG_API hahog_status hahog_synth(const char* settings_json, int frames, const char* out_dir, char** result_json);
/* method: "hahog" or "hog". corpus_dir may be NULL to train on the store alone. */
HAHOG_API hahog_status hahog_train(const char* settings_json, const char* method, const char* corpus_dir,
                                   const char* store_dir, const char* model_out, char** result_json);
/* method: "hahog", "hog" or "cluster" (model_path unused). input: corpus directory or raster. */
HAHOG_API hahog_status hahog_detect_corpus(const char* settings_json, const char* method, const char* model_path,
                                           const char* input, const char* out_path, char** result_json);
HAHOG_API hahog_status hahog_eval(const char* settings_json, const char* corpus_dir,
                                  const char* const* detection_files, size_t n_files, const char* out_csv,
                                  char** result_json);
HAHOG_API hahog_status hahog_bench(const char* settings_json, const char* model_path, const char* frame_path,
                                   int repetitions, char** result_json);
/* Descriptor of the window whose top-left pixel is (x, y), as a JSON array. */
HAHOG_API hahog_status hahog_dump_features(const char* settings_json, const char* method, const char* frame_path,
                                           int x, int y, char** result_json);

typedef struct hahog_service hahog_service;
/* Starts the review service on a background thread. port 0 picks a free port. */
HAHOG_API hahog_status hahog_service_start(const char* settings_json, const char* corpus_dir, const char* store_dir,
                                           const char* model_path, const char* host, int port, hahog_service** out,
                                           int* bound_port);
HAHOG_API hahog_status hahog_service_stop(hahog_service* service);
HAHOG_API void hahog_service_wait(hahog_service* service);
HAHOG_API void hahog_service_free(hahog_service* service);

#ifdef __cplusplus
}
#endif

#endif
