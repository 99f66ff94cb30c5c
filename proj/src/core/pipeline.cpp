#include "core/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <set>
#include <thread>

#include "core/errors.hpp"
#include "core/hash.hpp"
#include "core/parallel.hpp"

namespace hahog {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) fail(ErrorCode::Config, "bad value '" + v + "' for " + key);
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) out += fmt(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

template <typename T>
std::vector<T> split(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const std::size_t comma = v.find(',', start);
    std::string part = v.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    part.erase(0, part.find_first_not_of(" \t"));
    part.erase(part.find_last_not_of(" \t") + 1);
    if (!part.empty()) out.push_back(parse_number<T>(key, part));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const Settings&)> get;
  std::function<void(Settings&, const std::string&)> set;
};

#define HAHOG_INT(name, expr) \
  Field { name, [](const Settings& s) { return std::to_string(s.expr); }, \
          [](Settings& s, const std::string& v) { s.expr = parse_number<int>(name, v); } }
#define HAHOG_DBL(name, expr) \
  Field { name, [](const Settings& s) { return fmt(s.expr); }, \
          [](Settings& s, const std::string& v) { s.expr = parse_number<double>(name, v); } }
#define HAHOG_U64(name, expr) \
  Field { name, [](const Settings& s) { return std::to_string(s.expr); }, \
          [](Settings& s, const std::string& v) { s.expr = parse_number<std::uint64_t>(name, v); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      HAHOG_U64("seed", seed),
      HAHOG_INT("threads", threads),
      HAHOG_INT("scene.width", scene.width),
      HAHOG_INT("scene.height", scene.height),
      HAHOG_DBL("scene.sensor_height_mm", scene.calib.sensor_height_mm),
      HAHOG_DBL("scene.scale_mm_per_px", scene.calib.scale_mm_per_px),
      HAHOG_DBL("scene.spacing_min_mm", scene.spacing_mm.lo),
      HAHOG_DBL("scene.spacing_max_mm", scene.spacing_mm.hi),
      HAHOG_INT("scene.count_min", scene.count_min),
      HAHOG_INT("scene.count_max", scene.count_max),
      HAHOG_DBL("scene.head_height_min_mm", scene.head_height_mm.lo),
      HAHOG_DBL("scene.head_height_max_mm", scene.head_height_mm.hi),
      HAHOG_DBL("scene.head_radius_min_mm", scene.head_radius_mm.lo),
      HAHOG_DBL("scene.head_radius_max_mm", scene.head_radius_mm.hi),
      HAHOG_DBL("scene.shoulder_half_width_min_mm", scene.shoulder_half_width_mm.lo),
      HAHOG_DBL("scene.shoulder_half_width_max_mm", scene.shoulder_half_width_mm.hi),
      HAHOG_DBL("scene.shoulder_half_depth_min_mm", scene.shoulder_half_depth_mm.lo),
      HAHOG_DBL("scene.shoulder_half_depth_max_mm", scene.shoulder_half_depth_mm.hi),
      HAHOG_DBL("scene.neck_drop_min_mm", scene.neck_drop_mm.lo),
      HAHOG_DBL("scene.neck_drop_max_mm", scene.neck_drop_mm.hi),
      HAHOG_DBL("scene.floor_noise_mm", scene.floor_noise_mm),
      HAHOG_DBL("scene.invalid_prob", scene.invalid_prob),
      HAHOG_DBL("scene.wall_rate", scene.wall_rate),
      HAHOG_DBL("scene.hand_rate", scene.hand_rate),
      HAHOG_INT("scene.border_margin_px", scene.border_margin_px),
      HAHOG_INT("scene.max_attempts", scene.max_attempts),
      HAHOG_INT("features.cell_size", features.cell_size),
      HAHOG_INT("features.n_bins", features.n_bins),
      HAHOG_INT("features.window_cells", features.window_cells),
      HAHOG_INT("features.stride_cells", features.stride_cells),
      HAHOG_INT("features.n_height_bins", features.n_height_bins),
      HAHOG_DBL("features.h_max_mm", features.h_max_mm),
      HAHOG_DBL("negatives.d_neg_px", negatives.d_neg_px),
      HAHOG_DBL("negatives.near_min_px", negatives.near_min_px),
      HAHOG_DBL("negatives.near_max_px", negatives.near_max_px),
      HAHOG_DBL("negatives.quota_factor", negatives.quota_factor),
      HAHOG_INT("negatives.min_negatives", negatives.min_negatives),
      HAHOG_INT("negatives.positive_jitter", negatives.positive_jitter),
      HAHOG_DBL("negatives.near_miss_share", negatives.near_miss_share),
      HAHOG_DBL("augment.noise_sigma_mm", augment.noise_sigma_mm),
      HAHOG_DBL("train.learning_rate", train.learning_rate),
      HAHOG_INT("train.batch_size", train.batch_size),
      HAHOG_INT("train.epochs", train.epochs),
      HAHOG_DBL("train.beta1", train.beta1),
      HAHOG_DBL("train.beta2", train.beta2),
      HAHOG_DBL("train.epsilon", train.epsilon),
      HAHOG_INT("train.patience", train.patience),
      HAHOG_DBL("train.holdout_fraction", holdout_fraction),
      Field{"train.hidden", [](const Settings& s) { return join(s.hidden); },
            [](Settings& s, const std::string& v) { s.hidden = split<int>("train.hidden", v); }},
      HAHOG_DBL("detect.threshold", detector.threshold),
      HAHOG_DBL("detect.nms_radius_px", detector.nms_radius_px),
      HAHOG_DBL("cluster.h_min_mm", cluster.h_min_mm),
      HAHOG_DBL("cluster.linkage_cutoff_px", cluster.linkage_cutoff_px),
      HAHOG_INT("cluster.subsample_step", cluster.subsample_step),
      HAHOG_DBL("eval.match_radius_mm", eval.match_radius_mm),
      Field{"eval.bin_edges", [](const Settings& s) { return join(s.eval.edges); },
            [](Settings& s, const std::string& v) { s.eval.edges = split<double>("eval.bin_edges", v); }},
      Field{"eval.subset", [](const Settings& s) { return s.eval_subset; },
            [](Settings& s, const std::string& v) {
              if (v != "all" && v != "distractors") fail(ErrorCode::Config, "eval.subset must be all or distractors");
              s.eval_subset = v;
            }},
      HAHOG_INT("mine.rounds", mine_rounds),
      HAHOG_INT("mine.max_frames", mine_max_frames),
  };
  return table;
}

#undef HAHOG_INT
#undef HAHOG_DBL
#undef HAHOG_U64

const Field& field(const std::string& key) {
  for (const Field& f : fields())
    if (key == f.key) return f;
  fail(ErrorCode::Config, "unknown setting '" + key + "'");
}

void note(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

json counts_json(const DatasetStore& store) {
  const auto c = store.counts();
  return {{"positive", c.positive},
          {"negative", c.negative},
          {"total_positive", c.total_positive()},
          {"total_negative", c.total_negative()}};
}

std::string method_of(const FeatureConfig& fc) { return fc.n_height_bins == 0 ? "hog" : "hahog"; }

}  // namespace

void Settings::set(const std::string& key, const std::string& value) { field(key).set(*this, value); }
std::string Settings::get(const std::string& key) const { return field(key).get(*this); }

std::vector<std::string> Settings::keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.key);
  return out;
}

void Settings::apply(const json& overrides) {
  if (overrides.is_null()) return;
  if (!overrides.is_object()) fail(ErrorCode::Config, "settings must be a JSON object");
  for (const auto& [k, v] : overrides.items()) {
    if (v.is_string()) set(k, v.get<std::string>());
    else if (v.is_number_integer() || v.is_number_unsigned()) set(k, v.dump());
    else if (v.is_number()) set(k, fmt(v.get<double>()));
    else fail(ErrorCode::Config, "setting '" + k + "' must be a string or number");
  }
}

json Settings::effective() const {
  json j = json::object();
  for (const Field& f : fields()) j[f.key] = f.get(*this);
  return j;
}

void Settings::validate() const {
  scene.validate();
  features.validate();
  negatives.resolve(features);
  if (!(augment.noise_sigma_mm >= 0)) fail(ErrorCode::Config, "augment.noise_sigma_mm must be non-negative");
  train.validate();
  for (int h : hidden)
    if (h <= 0) fail(ErrorCode::Config, "hidden layer sizes must be positive");
  if (!(holdout_fraction >= 0 && holdout_fraction < 1)) fail(ErrorCode::Config, "holdout fraction must be in [0, 1)");
  detector.validate();
  cluster.validate();
  eval.validate();
  if (threads < 1) fail(ErrorCode::Config, "threads must be at least 1");
  if (mine_rounds < 0 || mine_max_frames < 0) fail(ErrorCode::Config, "mining settings must be non-negative");
}

FeatureConfig features_for_method(const Settings& s, const std::string& method) {
  FeatureConfig fc = s.features;
  if (method == "hog") fc.n_height_bins = 0;
  else if (method != "hahog") fail(ErrorCode::Config, "method must be hahog or hog, got '" + method + "'");
  return fc;
}

json run_synth(const Settings& s, int n_frames, const fs::path& out_dir, const Log& log) {
  s.validate();
  const auto scenes = generate_corpus(s.scene, n_frames, s.seed, s.threads);
  write_corpus(out_dir, scenes, s.scene, s.seed);
  std::size_t pedestrians = 0, distractors = 0;
  for (const auto& sc : scenes) {
    pedestrians += sc.annotations.points.size();
    distractors += sc.has_distractors() ? 1 : 0;
  }
  note(log, "wrote " + std::to_string(scenes.size()) + " frames to " + out_dir.string());
  return {{"frames", scenes.size()}, {"pedestrians", pedestrians}, {"frames_with_distractors", distractors},
          {"dir", out_dir.string()}};
}

json build_store(const Settings& s, const Corpus& corpus, DatasetStore& store, const FeatureConfig& fc, const Log& log) {
  std::set<std::string> present;
  for (const auto& e : store.entries())
    if (e.provenance != Provenance::HardMined) present.insert(e.frame_id);
  const Provenance prov = fs::exists(corpus.dir / "manifest.json") ? Provenance::Synthetic : Provenance::Annotated;

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < corpus.entries.size(); ++i)
    if (!present.count(corpus.entries[i].frame_id)) todo.push_back(i);

  std::vector<std::vector<Sample>> per_frame(todo.size());
  std::vector<int> skipped(todo.size(), 0);
  parallel_for(todo.size(), s.threads, [&](std::size_t k) {
    const std::size_t i = todo[k];
    const FrameRecord rec = load_frame(corpus.entries[i].raster);
    AnnotationSet ann = corpus.annotations[i];
    ann.frame_id = corpus.entries[i].frame_id;
    ExtractStats st;
    per_frame[k] = extract_samples(to_height_field(rec.frame, rec.calib), ann, fc, s.negatives,
                                   derive_seed(s.seed, 0x100000 + i), prov, &st);
    skipped[k] = st.skipped_positives;
  });
  std::vector<Sample> all;
  int n_skipped = 0;
  for (std::size_t k = 0; k < todo.size(); ++k) {
    all.insert(all.end(), std::make_move_iterator(per_frame[k].begin()), std::make_move_iterator(per_frame[k].end()));
    n_skipped += skipped[k];
  }
  const long n_pos = std::count_if(all.begin(), all.end(), [](const Sample& x) { return x.label == Label::Positive; });
  store.add(all);
  note(log, "store: +" + std::to_string(n_pos) + " positives, +" + std::to_string(all.size() - n_pos) +
                " negatives from " + std::to_string(todo.size()) + " frames (" + std::to_string(n_skipped) +
                " border positives skipped)");
  return {{"frames", todo.size()},
          {"positives", n_pos},
          {"negatives", static_cast<long>(all.size()) - n_pos},
          {"skipped_positives", n_skipped}};
}

json mine_round(const Settings& s, const Corpus& corpus, DatasetStore& store, const MlpModel& model, int round,
                const Log& log) {
  std::size_t n = corpus.entries.size();
  if (s.mine_max_frames > 0) n = std::min(n, static_cast<std::size_t>(s.mine_max_frames));
  std::vector<fs::path> frames;
  for (std::size_t i = 0; i < n; ++i) frames.push_back(corpus.entries[i].raster);
  const auto dets = detect_frames(s, method_of(model.feature_config), &model, frames);

  int fp = 0, fn = 0;
  IngestSummary total;
  for (std::size_t i = 0; i < n; ++i) {
    const FrameRecord rec = load_frame(frames[i]);
    const auto& pts = corpus.annotations[i].points;
    const MatchResult m = match(dets[i].detections, pts, s.eval.match_radius_mm, rec.calib);
    Verdict v;
    for (int k : m.fp) v.judgments.emplace_back(k, Judgment::FalsePositive);
    for (int a : m.fn) v.added.push_back(pts[static_cast<std::size_t>(a)]);
    if (v.judgments.empty() && v.added.empty()) continue;
    fp += static_cast<int>(m.fp.size());
    fn += static_cast<int>(m.fn.size());
    DetectionSet d = dets[i];
    d.frame_id = corpus.entries[i].frame_id;
    const auto sum = ingest_hard_mined(store, "mine-" + std::to_string(round) + "/" + d.frame_id,
                                       to_height_field(rec.frame, rec.calib), d, v, model.feature_config);
    total.positives += sum.positives;
    total.negatives += sum.negatives;
    total.skipped += sum.skipped;
  }
  note(log, "mining round " + std::to_string(round) + ": " + std::to_string(fp) + " false positives, " +
                std::to_string(fn) + " misses over " + std::to_string(n) + " frames");
  return {{"round", round},        {"frames", n},
          {"false_positives", fp}, {"missed", fn},
          {"new_negatives", total.negatives}, {"new_positives", total.positives}};
}

json run_train(const Settings& s, const std::string& method, const fs::path& corpus_dir, const fs::path& store_dir,
               const fs::path& model_out, const Log& log) {
  s.validate();
  const FeatureConfig fc = features_for_method(s, method);
  DatasetStore store(store_dir, fc.window_px());
  json summary = {{"method", method}};
  std::optional<Corpus> corpus;
  if (!corpus_dir.empty()) {
    corpus = read_corpus(corpus_dir);
    summary["ingest"] = build_store(s, *corpus, store, fc, log);
  }
  if (s.mine_rounds > 0 && !corpus) fail(ErrorCode::InvalidArgument, "mining needs a corpus");

  TrainingOptions opt;
  opt.features = fc;
  opt.train = s.train;
  opt.augment = s.augment;
  opt.hidden = s.hidden;
  opt.holdout_fraction = s.holdout_fraction;
  opt.threads = s.threads;

  auto train_once = [&](const std::string& tag) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainingReport r = run_training(store, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (std::size_t e = 0; e < r.loss_history.size(); ++e)
      note(log, tag + " epoch " + std::to_string(e + 1) + " loss " + fmt(r.loss_history[e]) +
                    (e < r.holdout_history.size() ? " holdout " + fmt(r.holdout_history[e]) : ""));
    note(log, tag + " holdout accuracy " + fmt(r.holdout_accuracy) + " (" + std::to_string(r.train_samples) +
                  " train / " + std::to_string(r.holdout_samples) + " holdout, " + fmt(secs) + " s)");
    return r;
  };

  TrainingReport report = train_once("train");
  json rounds = json::array();
  for (int round = 1; round <= s.mine_rounds; ++round) {
    rounds.push_back(mine_round(s, *corpus, store, report.model, round, log));
    report = train_once("round " + std::to_string(round));
  }
  save_model(report.model, model_out);
  summary["store"] = counts_json(store);
  summary["mining"] = rounds;
  summary["loss_history"] = report.loss_history;
  summary["holdout_history"] = report.holdout_history;
  summary["holdout_accuracy"] = report.holdout_accuracy;
  summary["train_samples"] = report.train_samples;
  summary["holdout_samples"] = report.holdout_samples;
  summary["model_hash"] = model_hash(report.model);
  summary["model"] = model_out.string();
  return summary;
}

std::vector<DetectionSet> detect_frames(const Settings& s, const std::string& method, const MlpModel* model,
                                        const std::vector<fs::path>& frames) {
  if (method != "cluster") {
    if (!model) fail(ErrorCode::InvalidArgument, "method " + method + " needs a model");
    if (method_of(model->feature_config) != method)
      fail(ErrorCode::Config, "model was trained for " + method_of(model->feature_config) + ", not " + method);
  }
  std::vector<DetectionSet> out(frames.size());
  // Frames in parallel, each frame single-threaded: output never depends on the thread count.
  parallel_for(frames.size(), s.threads, [&](std::size_t i) {
    const FrameRecord rec = load_frame(frames[i]);
    out[i] = method == "cluster" ? cluster_detect(rec.frame, rec.calib, s.cluster)
                                 : detect(rec.frame, rec.calib, *model, s.detector, 1);
    out[i].frame_id = rec.frame.frame_id;
  });
  return out;
}

std::vector<fs::path> list_frames(const fs::path& input) {
  if (fs::is_directory(input)) {
    std::vector<fs::path> out;
    for (const auto& e : read_corpus(input).entries) out.push_back(e.raster);
    return out;
  }
  if (!fs::exists(input)) fail(ErrorCode::NotFound, "no such frame or corpus: " + input.string());
  return {input};
}

json run_detect(const Settings& s, const std::string& method, const fs::path& model_path, const fs::path& input,
                const fs::path& out_path, const Log& log) {
  s.validate();
  if (method != "hahog" && method != "hog" && method != "cluster")
    fail(ErrorCode::Config, "method must be hahog, hog or cluster");
  std::optional<MlpModel> model;
  if (method != "cluster") model = load_model(model_path);
  const auto frames = list_frames(input);
  const auto t0 = std::chrono::steady_clock::now();
  const auto sets = detect_frames(s, method, model ? &*model : nullptr, frames);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_detections(out_path, sets);
  std::size_t n = 0;
  for (const auto& d : sets) n += d.detections.size();
  note(log, method + ": " + std::to_string(n) + " detections in " + std::to_string(sets.size()) + " frames (" +
                fmt(secs) + " s)");
  json j = {{"method", method}, {"frames", sets.size()}, {"detections", n}, {"out", out_path.string()}};
  if (model) j["model_hash"] = model_hash(*model);
  return j;
}

std::vector<MethodReport> evaluate_detections(
    const Settings& s, const Corpus& corpus, const std::vector<std::pair<std::string, std::vector<DetectionSet>>>& runs) {
  std::vector<std::size_t> frames;
  for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
    const auto& e = corpus.entries[i];
    if (s.eval_subset == "distractors" && e.walls == 0 && e.hands == 0) continue;
    frames.push_back(i);
  }
  std::vector<Calibration> calibs(frames.size());
  parallel_for(frames.size(), s.threads,
               [&](std::size_t k) { calibs[k] = load_frame(corpus.entries[frames[k]].raster).calib; });

  std::vector<MethodReport> out;
  for (const auto& [method, sets] : runs) {
    std::map<std::string, const DetectionSet*> by_id;
    for (const auto& d : sets) by_id[d.frame_id] = &d;
    std::vector<BinReport> per(frames.size(), BinReport(s.eval.edges));
    parallel_for(frames.size(), s.threads, [&](std::size_t k) {
      const std::string& id = corpus.entries[frames[k]].frame_id;
      auto it = by_id.find(id);
      if (it == by_id.end()) fail(ErrorCode::NotFound, method + " detections lack frame " + id);
      per[k] = evaluate_frame(it->second->detections, corpus.annotations[frames[k]].points, calibs[k], s.eval);
    });
    MethodReport mr{method, BinReport(s.eval.edges)};
    for (const auto& r : per) mr.report += r;
    out.push_back(std::move(mr));
  }
  return out;
}

json run_eval(const Settings& s, const fs::path& corpus_dir, const std::vector<fs::path>& detection_files,
              const fs::path& out_csv, const Log& log) {
  s.validate();
  const Corpus corpus = read_corpus(corpus_dir);
  std::vector<std::pair<std::string, std::vector<DetectionSet>>> runs;
  for (const auto& f : detection_files) {
    auto sets = read_detections(f);
    const std::string method = sets.empty() ? f.stem().string() : sets.front().method;
    runs.emplace_back(method, std::move(sets));
  }
  const auto reports = evaluate_detections(s, corpus, runs);
  write_report(out_csv, reports, s.eval.match_radius_mm);
  json j = {{"csv", out_csv.string()}, {"methods", json::array()}};
  for (const auto& mr : reports) {
    json bins = json::array();
    for (std::size_t i = 0; i < mr.report.bins.size(); ++i) {
      const auto& b = mr.report.bins[i];
      const auto f = b.fscore();
      bins.push_back({{"lo", mr.report.edges[i]},
                      {"hi", mr.report.edges[i + 1]},
                      {"tp", b.tp},
                      {"fp", b.fp},
                      {"fn", b.fn},
                      {"fscore", f ? json(*f) : json(nullptr)}});
    }
    const auto t = mr.report.total();
    const auto tf = t.fscore();
    j["methods"].push_back({{"method", mr.method}, {"bins", bins}, {"fscore", tf ? json(*tf) : json(nullptr)}});
    note(log, mr.method + ": overall F " + (tf ? fmt(*tf) : std::string("n/a")));
  }
  return j;
}

json run_bench(const Settings& s, const fs::path& model_path, const fs::path& frame_path, int repetitions,
               const Log& log) {
  s.validate();
  if (repetitions < 1) fail(ErrorCode::InvalidArgument, "repetitions must be positive");
  const MlpModel model = load_model(model_path);
  const FrameRecord rec = load_frame(frame_path);
  const int multi = s.threads > 1 ? s.threads : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  auto time = [&](int threads) {
    detect(rec.frame, rec.calib, model, s.detector, threads);
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < repetitions; ++r) detect(rec.frame, rec.calib, model, s.detector, threads);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return repetitions / secs;
  };
  const double single = time(1);
  const double parallel = multi > 1 ? time(multi) : single;
  note(log, "single-thread " + fmt(single) + " fps, " + std::to_string(multi) + " threads " + fmt(parallel) + " fps");
  return {{"width", rec.frame.width},
          {"height", rec.frame.height},
          {"repetitions", repetitions},
          {"fps_single", single},
          {"threads", multi},
          {"fps_multi", parallel},
          {"hardware_threads", std::thread::hardware_concurrency()}};
}

std::vector<double> dump_features(const Settings& s, const std::string& method, const fs::path& frame, int x, int y) {
  const FeatureConfig fc = features_for_method(s, method);
  fc.validate();
  if (x % fc.cell_size || y % fc.cell_size)
    fail(ErrorCode::InvalidArgument, "window origin must lie on the cell grid");
  const FrameRecord rec = load_frame(frame);
  const HeightField field = to_height_field(rec.frame, rec.calib);
  const CellGrid grid = precompute_frame_cells(field, fc, 1);
  const CellOrigin o{x / fc.cell_size, y / fc.cell_size};
  if (o.cx < 0 || o.cy < 0 || o.cx + fc.window_cells > grid.cells_x || o.cy + fc.window_cells > grid.cells_y)
    fail(ErrorCode::Bounds, "window outside the frame");
  return hahog(grid, field, o, fc);
}

}  // namespace hahog
