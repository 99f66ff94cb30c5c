#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "core/depth.hpp"
#include "core/detector.hpp"
#include "core/features.hpp"
#include "core/mlp.hpp"

namespace hahog {

enum class Label : int { Negative = 0, Positive = 1 };
enum class Provenance : int { Synthetic = 0, Annotated = 1, HardMined = 2 };

const char* label_name(Label l);
const char* provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& s);

struct Sample {
  HeightField patch;  // window_px x window_px
  Label label = Label::Negative;
  Provenance provenance = Provenance::Synthetic;
  std::string frame_id;
  Point origin;  // top-left pixel of the window in its frame
};

/// Where negatives come from. Distances in pixels; zero picks the default for the
/// feature configuration.
struct NegativePolicy {
  double d_neg_px = 0.0;        // far negatives: centre at least this far from every annotation (default: window side)
  double near_min_px = 0.0;     // near misses start here (default: cell size)
  double near_max_px = 0.0;     // ... and end here (default: d_neg)
  double quota_factor = 3.0;    // negatives per positive crop
  int min_negatives = 8;        // per frame, used when a frame has no positives
  int positive_jitter = 2;      // extra positive crops per annotation, offset by at most stride / 2
  double near_miss_share = 0.5;

  struct Resolved {
    double d_neg, near_min, near_max;
  };
  Resolved resolve(const FeatureConfig& cfg) const;
};

struct ExtractStats {
  int skipped_positives = 0;
};

/// Positive crops centred on annotations and negatives that are either far from every
/// annotation or near misses that are not centred on any annotation.
std::vector<Sample> extract_samples(const HeightField& field, const AnnotationSet& annotations,
                                    const FeatureConfig& cfg, const NegativePolicy& policy, std::uint64_t seed,
                                    Provenance provenance = Provenance::Synthetic, ExtractStats* stats = nullptr);

struct AugmentConfig {
  double noise_sigma_mm = 15.0;
};

/// Counter-clockwise quarter turn: out(x, y) = in(y, n - 1 - x).
HeightField rotate90(const HeightField& patch);

/// The four right-angle rotations (0, 90, 180, 270 degrees), each with optional additive
/// Gaussian noise on valid pixels. Labels and provenance are preserved.
std::vector<Sample> augment(const Sample& sample, const AugmentConfig& cfg, std::uint64_t seed);

constexpr int kAugmentFactor = 4;

enum class Judgment { Correct, FalsePositive };

/// Expert review of one frame's detections.
struct Verdict {
  std::vector<std::pair<int, Judgment>> judgments;  // detection index -> judgment
  std::vector<Point> added;                         // missed pedestrians
  std::string note;

  std::string to_json() const;
  static Verdict from_json(const std::string& text);
  /// Content hash over the canonical JSON form.
  std::string hash() const;
};

struct IngestSummary {
  int positives = 0;
  int negatives = 0;
  int skipped = 0;
  bool replayed = false;
};

/// On-disk sample store: positive/<id>.bin, negative/<id>.bin and manifest.json.
/// All mutations go through one writer lock and end with an atomic manifest rewrite.
class DatasetStore {
 public:
  struct Entry {
    std::string id;
    Label label = Label::Negative;
    Provenance provenance = Provenance::Synthetic;
    std::string frame_id;
    Point origin;
  };
  struct Counts {
    std::map<std::string, int> positive;  // by provenance
    std::map<std::string, int> negative;
    int total_positive() const;
    int total_negative() const;
  };
  struct IngestRecord {
    std::string key;
    std::string verdict_hash;
    IngestSummary summary;
  };

  /// Opens (or creates) a store for patches of `window_px` pixels.
  DatasetStore(std::filesystem::path dir, int window_px);
  DatasetStore(const DatasetStore&) = delete;
  DatasetStore& operator=(const DatasetStore&) = delete;

  const std::filesystem::path& dir() const { return dir_; }
  int window_px() const { return window_px_; }

  std::vector<Entry> entries() const;
  Counts counts() const;
  std::vector<IngestRecord> ingests() const;

  /// Appends samples and rewrites the manifest once.
  std::vector<std::string> add(const std::vector<Sample>& samples);

  HeightField load_patch(const Entry& entry) const;

  /// Rewrites the manifest from the in-memory state.
  void flush() const;

  /// Recounts the patch files on disk per label.
  std::pair<int, int> recount_files() const;

  /// Runs `fn` under the writer lock. Used to make check-then-write sequences atomic.
  template <typename Fn>
  auto locked(Fn&& fn) {
    std::lock_guard lock(mutex_);
    return fn();
  }

  // The following require the writer lock (see locked()).
  std::optional<IngestRecord> find_ingest_unlocked(const std::string& key) const;
  std::vector<std::string> add_unlocked(const std::vector<Sample>& samples, const IngestRecord* record);

 private:
  void load_manifest();
  void write_manifest() const;
  std::filesystem::path patch_path(const Entry& e) const;

  std::filesystem::path dir_;
  int window_px_;
  std::vector<Entry> entries_;
  std::vector<IngestRecord> ingests_;
  std::uint64_t next_id_ = 0;
  mutable std::mutex mutex_;
};

/// Turns an expert verdict into samples: false positives become negatives at their
/// window, confirmed and added positions become positives. Replaying the same verdict
/// under the same key changes nothing; a different verdict under that key is a conflict.
IngestSummary ingest_hard_mined(DatasetStore& store, const std::string& key, const HeightField& field,
                                const DetectionSet& detections, const Verdict& verdict, const FeatureConfig& cfg);

struct TrainingOptions {
  FeatureConfig features;
  TrainConfig train;
  AugmentConfig augment;
  std::vector<int> hidden{64, 16};
  double holdout_fraction = 0.1;
  int threads = 1;
};

struct TrainingReport {
  MlpModel model;
  std::vector<double> loss_history;
  std::vector<double> holdout_history;
  std::size_t train_samples = 0;
  std::size_t holdout_samples = 0;
  double holdout_accuracy = 0.0;
};

/// Augments every stored sample, computes descriptors, trains the classifier.
TrainingReport run_training(const DatasetStore& store, const TrainingOptions& options);

}  // namespace hahog
