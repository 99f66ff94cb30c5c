#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "core/cluster.hpp"
#include "core/detector.hpp"
#include "core/evaluation.hpp"
#include "core/features.hpp"
#include "core/synth.hpp"
#include "core/training.hpp"
#include "json.hpp"

namespace hahog {

using Log = std::function<void(const std::string&)>;

/// Every tunable of the tool, addressable by a dotted key ("train.epochs", "detect.threshold").
struct Settings {
  SceneConfig scene;
  FeatureConfig features;
  NegativePolicy negatives;
  AugmentConfig augment;
  TrainConfig train;
  std::vector<int> hidden{64, 16};
  double holdout_fraction = 0.1;
  DetectorConfig detector;
  ClusterConfig cluster;
  EvalConfig eval;
  std::string eval_subset = "all";  // all | distractors
  int mine_rounds = 0;
  int mine_max_frames = 0;  // 0 = every corpus frame
  std::uint64_t seed = 1;
  int threads = 1;

  /// Sets one key from its text form. Unknown keys and unparsable values are Config errors.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();
  /// Applies a flat JSON object of key -> value (strings or numbers).
  void apply(const nlohmann::json& overrides);
  /// Every key with its effective value.
  nlohmann::json effective() const;
  void validate() const;
};

/// Feature configuration for a method name: "hahog" as configured, "hog" without the height part.
FeatureConfig features_for_method(const Settings& s, const std::string& method);

nlohmann::json run_synth(const Settings& s, int n_frames, const std::filesystem::path& out_dir, const Log& log = {});

/// Extracts samples from every annotated corpus frame into the store. Frames already in the
/// store are skipped.
nlohmann::json build_store(const Settings& s, const Corpus& corpus, DatasetStore& store, const FeatureConfig& fc,
                           const Log& log = {});

/// Scores the corpus with `model` and feeds mistakes back into the store, with the ground
/// truth acting as the reviewer: unmatched detections become negatives and missed
/// annotations positives.
nlohmann::json mine_round(const Settings& s, const Corpus& corpus, DatasetStore& store, const MlpModel& model,
                          int round, const Log& log = {});

/// Store build, training and optional mining rounds. Writes the model to `model_out`.
nlohmann::json run_train(const Settings& s, const std::string& method, const std::filesystem::path& corpus_dir,
                         const std::filesystem::path& store_dir, const std::filesystem::path& model_out,
                         const Log& log = {});

/// Detections for every frame, in corpus order.
std::vector<DetectionSet> detect_frames(const Settings& s, const std::string& method, const MlpModel* model,
                                        const std::vector<std::filesystem::path>& frames);

nlohmann::json run_detect(const Settings& s, const std::string& method, const std::filesystem::path& model_path,
                          const std::filesystem::path& input, const std::filesystem::path& out_path,
                          const Log& log = {});

/// Frames named by `input`: a corpus directory, or a single raster.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& input);

std::vector<MethodReport> evaluate_detections(const Settings& s, const Corpus& corpus,
                                              const std::vector<std::pair<std::string, std::vector<DetectionSet>>>& runs);

nlohmann::json run_eval(const Settings& s, const std::filesystem::path& corpus_dir,
                        const std::vector<std::filesystem::path>& detection_files,
                        const std::filesystem::path& out_csv, const Log& log = {});

nlohmann::json run_bench(const Settings& s, const std::filesystem::path& model_path,
                         const std::filesystem::path& frame_path, int repetitions, const Log& log = {});

/// Descriptor of the window whose top-left pixel is (x, y).
std::vector<double> dump_features(const Settings& s, const std::string& method, const std::filesystem::path& frame,
                                  int x, int y);

}  // namespace hahog
