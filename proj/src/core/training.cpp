#include "core/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "core/errors.hpp"
#include "core/hash.hpp"
#include "core/parallel.hpp"
#include "json.hpp"

namespace hahog {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kPatchMagic[4] = {'H', 'P', 'A', 'T'};
constexpr std::uint16_t kInvalidSample = 65535;
constexpr int kAttemptsPerNegative = 50;

double nearest_distance(const std::vector<Point>& pts, double x, double y) {
  double best = std::numeric_limits<double>::infinity();
  for (const Point& p : pts) best = std::min(best, std::hypot(x - p.x, y - p.y));
  return best;
}

// Window whose centre is c, if it fits the field.
bool window_at(const HeightField& field, int window_px, Point c, Point& origin) {
  origin = {c.x - window_px / 2, c.y - window_px / 2};
  return origin.x >= 0 && origin.y >= 0 && origin.x + window_px <= field.width && origin.y + window_px <= field.height;
}

Sample make_sample(const HeightField& field, Point origin, int window_px, Label label, Provenance prov,
                   const std::string& frame_id) {
  Sample s;
  s.patch = field.crop(origin.x, origin.y, window_px, window_px);
  s.label = label;
  s.provenance = prov;
  s.frame_id = frame_id;
  s.origin = origin;
  return s;
}

std::string encode_patch(const HeightField& p) {
  std::string out(8 + 2 * p.h.size(), '\0');
  std::memcpy(out.data(), kPatchMagic, 4);
  auto put16 = [&](std::size_t at, std::uint16_t v) {
    out[at] = static_cast<char>(v & 0xff);
    out[at + 1] = static_cast<char>(v >> 8);
  };
  put16(4, static_cast<std::uint16_t>(p.width));
  put16(6, static_cast<std::uint16_t>(p.height));
  for (std::size_t i = 0; i < p.h.size(); ++i) {
    std::uint16_t v = kInvalidSample;
    if (p.valid[i]) v = static_cast<std::uint16_t>(std::clamp(std::lround(p.h[i] * 10.0), 0L, 65534L));
    put16(8 + 2 * i, v);
  }
  return out;
}

HeightField decode_patch(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPatchMagic, 4) != 0)
    fail(ErrorCode::MalformedHeader, "not a patch file");
  auto get16 = [&](std::size_t at) {
    return static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[at]) |
                                      (static_cast<unsigned char>(bytes[at + 1]) << 8));
  };
  HeightField p;
  p.width = get16(4);
  p.height = get16(6);
  const std::size_t n = static_cast<std::size_t>(p.width) * p.height;
  if (bytes.size() != 8 + 2 * n) fail(ErrorCode::TruncatedPayload, "patch payload size mismatch");
  p.h.assign(n, 0.0);
  p.valid.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint16_t v = get16(8 + 2 * i);
    if (v == kInvalidSample) continue;
    p.h[i] = v / 10.0;
    p.valid[i] = 1;
  }
  return p;
}

const char* judgment_name(Judgment j) { return j == Judgment::Correct ? "correct" : "false-positive"; }

}  // namespace

const char* label_name(Label l) { return l == Label::Positive ? "positive" : "negative"; }

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Synthetic: return "synthetic";
    case Provenance::Annotated: return "annotated";
    case Provenance::HardMined: return "hard-mined";
  }
  return "synthetic";
}

Provenance provenance_from_name(const std::string& s) {
  if (s == "synthetic") return Provenance::Synthetic;
  if (s == "annotated") return Provenance::Annotated;
  if (s == "hard-mined") return Provenance::HardMined;
  fail(ErrorCode::Format, "unknown provenance '" + s + "'");
}

NegativePolicy::Resolved NegativePolicy::resolve(const FeatureConfig& cfg) const {
  Resolved r;
  r.d_neg = d_neg_px > 0 ? d_neg_px : cfg.window_px();
  r.near_min = near_min_px > 0 ? near_min_px : cfg.cell_size;
  r.near_max = near_max_px > 0 ? near_max_px : r.d_neg;
  if (r.near_min > r.near_max || r.near_max > r.d_neg)
    fail(ErrorCode::Config, "near-miss band must satisfy near_min <= near_max <= d_neg");
  if (quota_factor < 0 || min_negatives < 0 || positive_jitter < 0 || near_miss_share < 0 || near_miss_share > 1)
    fail(ErrorCode::Config, "invalid negative policy");
  return r;
}

std::vector<Sample> extract_samples(const HeightField& field, const AnnotationSet& annotations,
                                    const FeatureConfig& cfg, const NegativePolicy& policy, std::uint64_t seed,
                                    Provenance provenance, ExtractStats* stats) {
  cfg.validate();
  const auto band = policy.resolve(cfg);
  const int w = cfg.window_px();
  const auto& pts = annotations.points;
  for (const Point& p : pts)
    if (p.x < 0 || p.y < 0 || p.x >= field.width || p.y >= field.height)
      fail(ErrorCode::Bounds, "annotation outside the frame");

  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  ExtractStats local;
  const int jitter = cfg.stride_cells * cfg.cell_size / 2;
  std::uniform_int_distribution<int> uj(-jitter, jitter);

  for (const Point& a : pts) {
    Point origin;
    if (!window_at(field, w, a, origin)) {
      ++local.skipped_positives;
      continue;
    }
    out.push_back(make_sample(field, origin, w, Label::Positive, provenance, annotations.frame_id));
    for (int k = 0; k < policy.positive_jitter; ++k) {
      const Point c{a.x + uj(rng), a.y + uj(rng)};
      if (window_at(field, w, c, origin))
        out.push_back(make_sample(field, origin, w, Label::Positive, provenance, annotations.frame_id));
    }
  }

  const std::size_t n_pos = out.size();
  const int quota = n_pos > 0 ? static_cast<int>(std::lround(policy.quota_factor * static_cast<double>(n_pos)))
                              : policy.min_negatives;
  const int n_near = pts.empty() ? 0 : static_cast<int>(std::lround(policy.near_miss_share * quota));
  const int n_far = quota - n_near;

  if (field.width >= w && field.height >= w) {
    std::uniform_int_distribution<int> ux(w / 2, field.width - w + w / 2), uy(w / 2, field.height - w + w / 2);
    std::uniform_real_distribution<double> ur(band.near_min, band.near_max), ua(0.0, 2.0 * std::numbers::pi);
    std::uniform_int_distribution<std::size_t> upick(0, pts.empty() ? 0 : pts.size() - 1);

    int made = 0;
    for (int attempt = 0; made < n_near && attempt < n_near * kAttemptsPerNegative; ++attempt) {
      const Point& a = pts[upick(rng)];
      const double r = ur(rng), t = ua(rng);
      const Point c{static_cast<int>(std::lround(a.x + r * std::cos(t))),
                    static_cast<int>(std::lround(a.y + r * std::sin(t)))};
      const double d = nearest_distance(pts, c.x, c.y);
      const bool ok = (d >= band.near_min && d <= band.near_max) || d >= band.d_neg;
      Point origin;
      if (!ok || !window_at(field, w, c, origin)) continue;
      out.push_back(make_sample(field, origin, w, Label::Negative, provenance, annotations.frame_id));
      ++made;
    }
    made = 0;
    for (int attempt = 0; made < n_far && attempt < n_far * kAttemptsPerNegative; ++attempt) {
      const Point c{ux(rng), uy(rng)};
      Point origin;
      if (nearest_distance(pts, c.x, c.y) < band.d_neg || !window_at(field, w, c, origin)) continue;
      out.push_back(make_sample(field, origin, w, Label::Negative, provenance, annotations.frame_id));
      ++made;
    }
  }
  if (stats) *stats = local;
  return out;
}

HeightField rotate90(const HeightField& in) {
  if (in.width != in.height) fail(ErrorCode::Dimension, "rotation needs a square patch");
  const int n = in.width;
  HeightField out = in;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const std::size_t src = in.index(y, n - 1 - x), dst = out.index(x, y);
      out.h[dst] = in.h[src];
      out.valid[dst] = in.valid[src];
    }
  return out;
}

std::vector<Sample> augment(const Sample& sample, const AugmentConfig& cfg, std::uint64_t seed) {
  if (sample.patch.width != sample.patch.height) fail(ErrorCode::Dimension, "augmentation needs a square patch");
  if (!(cfg.noise_sigma_mm >= 0)) fail(ErrorCode::Config, "noise sigma must be non-negative");
  std::vector<Sample> out;
  out.reserve(kAugmentFactor);
  HeightField rotated = sample.patch;
  for (int k = 0; k < kAugmentFactor; ++k) {
    if (k > 0) rotated = rotate90(rotated);
    Sample s = sample;
    s.patch = rotated;
    if (cfg.noise_sigma_mm > 0) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
      std::normal_distribution<double> noise(0.0, cfg.noise_sigma_mm);
      for (std::size_t i = 0; i < s.patch.h.size(); ++i)
        if (s.patch.valid[i]) s.patch.h[i] = std::max(0.0, s.patch.h[i] + noise(rng));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string Verdict::to_json() const {
  auto sorted = judgments;
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.first < b.first; });
  json j = {{"judgments", json::array()}, {"added", json::array()}, {"note", note}};
  for (const auto& [id, v] : sorted) j["judgments"].push_back({{"id", id}, {"judgment", judgment_name(v)}});
  for (const Point& p : added) j["added"].push_back({{"x", p.x}, {"y", p.y}});
  return j.dump();
}

Verdict Verdict::from_json(const std::string& text) {
  Verdict v;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) fail(ErrorCode::Format, "verdict must be a JSON object");
    if (j.contains("judgments")) {
      for (const auto& e : j.at("judgments")) {
        const std::string s = e.at("judgment").get<std::string>();
        Judgment jd;
        if (s == "correct") jd = Judgment::Correct;
        else if (s == "false-positive") jd = Judgment::FalsePositive;
        else fail(ErrorCode::Format, "unknown judgment '" + s + "'");
        v.judgments.emplace_back(e.at("id").get<int>(), jd);
      }
    }
    if (j.contains("added"))
      for (const auto& e : j.at("added")) v.added.push_back({e.at("x").get<int>(), e.at("y").get<int>()});
    if (j.contains("note")) v.note = j.at("note").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad verdict: ") + e.what());
  }
  std::vector<int> ids;
  for (auto& [id, _] : v.judgments) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    fail(ErrorCode::InvalidArgument, "detection judged twice");
  return v;
}

std::string Verdict::hash() const { return fnv1a_hex(to_json()); }

int DatasetStore::Counts::total_positive() const {
  int n = 0;
  for (auto& [_, c] : positive) n += c;
  return n;
}

int DatasetStore::Counts::total_negative() const {
  int n = 0;
  for (auto& [_, c] : negative) n += c;
  return n;
}

DatasetStore::DatasetStore(fs::path dir, int window_px) : dir_(std::move(dir)), window_px_(window_px) {
  if (window_px <= 0) fail(ErrorCode::Config, "window size must be positive");
  std::error_code ec;
  fs::create_directories(dir_ / "positive", ec);
  fs::create_directories(dir_ / "negative", ec);
  if (ec) fail(ErrorCode::Io, "cannot create store at " + dir_.string() + ": " + ec.message());
  if (fs::exists(dir_ / "manifest.json")) load_manifest();
  else write_manifest();
}

void DatasetStore::load_manifest() {
  try {
    const json j = json::parse(read_file(dir_ / "manifest.json"));
    if (j.at("window_px").get<int>() != window_px_)
      fail(ErrorCode::Config, "store holds " + std::to_string(j.at("window_px").get<int>()) + " px patches");
    next_id_ = j.at("next_id").get<std::uint64_t>();
    for (const auto& e : j.at("samples")) {
      Entry en;
      en.id = e.at("id").get<std::string>();
      en.label = e.at("label").get<std::string>() == "positive" ? Label::Positive : Label::Negative;
      en.provenance = provenance_from_name(e.at("provenance").get<std::string>());
      en.frame_id = e.at("frame_id").get<std::string>();
      en.origin = {e.at("x").get<int>(), e.at("y").get<int>()};
      entries_.push_back(std::move(en));
    }
    for (const auto& e : j.at("ingests")) {
      IngestRecord r;
      r.key = e.at("key").get<std::string>();
      r.verdict_hash = e.at("verdict_hash").get<std::string>();
      r.summary.positives = e.at("positives").get<int>();
      r.summary.negatives = e.at("negatives").get<int>();
      r.summary.skipped = e.at("skipped").get<int>();
      ingests_.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad store manifest: ") + e.what());
  }
}

void DatasetStore::write_manifest() const {
  json samples = json::array();
  Counts c;
  for (const Entry& e : entries_) {
    samples.push_back({{"id", e.id},
                       {"label", label_name(e.label)},
                       {"provenance", provenance_name(e.provenance)},
                       {"frame_id", e.frame_id},
                       {"x", e.origin.x},
                       {"y", e.origin.y}});
    (e.label == Label::Positive ? c.positive : c.negative)[provenance_name(e.provenance)]++;
  }
  json ingests = json::array();
  for (const IngestRecord& r : ingests_)
    ingests.push_back({{"key", r.key},
                       {"verdict_hash", r.verdict_hash},
                       {"positives", r.summary.positives},
                       {"negatives", r.summary.negatives},
                       {"skipped", r.summary.skipped}});
  const json j = {{"window_px", window_px_},
                  {"next_id", next_id_},
                  {"counts", {{"positive", c.positive}, {"negative", c.negative}}},
                  {"samples", samples},
                  {"ingests", ingests}};
  write_file_atomic(dir_ / "manifest.json", j.dump(1));
}

fs::path DatasetStore::patch_path(const Entry& e) const {
  return dir_ / label_name(e.label) / (e.id + ".bin");
}

std::vector<DatasetStore::Entry> DatasetStore::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

DatasetStore::Counts DatasetStore::counts() const {
  std::lock_guard lock(mutex_);
  Counts c;
  for (const Entry& e : entries_) (e.label == Label::Positive ? c.positive : c.negative)[provenance_name(e.provenance)]++;
  return c;
}

std::vector<DatasetStore::IngestRecord> DatasetStore::ingests() const {
  std::lock_guard lock(mutex_);
  return ingests_;
}

std::vector<std::string> DatasetStore::add(const std::vector<Sample>& samples) {
  std::lock_guard lock(mutex_);
  return add_unlocked(samples, nullptr);
}

std::optional<DatasetStore::IngestRecord> DatasetStore::find_ingest_unlocked(const std::string& key) const {
  for (const IngestRecord& r : ingests_)
    if (r.key == key) return r;
  return std::nullopt;
}

std::vector<std::string> DatasetStore::add_unlocked(const std::vector<Sample>& samples, const IngestRecord* record) {
  for (const Sample& s : samples)
    if (s.patch.width != window_px_ || s.patch.height != window_px_)
      fail(ErrorCode::Dimension, "sample patch does not match the store window size");
  std::vector<std::string> ids;
  std::vector<Entry> added;
  for (const Sample& s : samples) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%08llu", static_cast<unsigned long long>(next_id_ + added.size()));
    Entry e{buf, s.label, s.provenance, s.frame_id, s.origin};
    write_file_atomic(patch_path(e), encode_patch(s.patch));
    ids.push_back(e.id);
    added.push_back(std::move(e));
  }
  next_id_ += added.size();
  entries_.insert(entries_.end(), added.begin(), added.end());
  if (record) ingests_.push_back(*record);
  write_manifest();
  return ids;
}

HeightField DatasetStore::load_patch(const Entry& entry) const {
  HeightField p = decode_patch(read_file(patch_path(entry)));
  if (p.width != window_px_ || p.height != window_px_) fail(ErrorCode::Dimension, "stored patch has the wrong size");
  return p;
}

void DatasetStore::flush() const {
  std::lock_guard lock(mutex_);
  write_manifest();
}

std::pair<int, int> DatasetStore::recount_files() const {
  auto count = [&](const char* sub) {
    int n = 0;
    for (const auto& f : fs::directory_iterator(dir_ / sub))
      if (f.path().extension() == ".bin") ++n;
    return n;
  };
  return {count("positive"), count("negative")};
}

IngestSummary ingest_hard_mined(DatasetStore& store, const std::string& key, const HeightField& field,
                                const DetectionSet& detections, const Verdict& verdict, const FeatureConfig& cfg) {
  const int w = cfg.window_px();
  if (w != store.window_px()) fail(ErrorCode::Config, "feature window does not match the store");
  for (const auto& [id, _] : verdict.judgments)
    if (id < 0 || static_cast<std::size_t>(id) >= detections.detections.size())
      fail(ErrorCode::NotFound, "verdict for unknown detection id " + std::to_string(id));
  for (const Point& p : verdict.added)
    if (p.x < 0 || p.y < 0 || p.x >= field.width || p.y >= field.height)
      fail(ErrorCode::Bounds, "added position outside the frame");

  IngestSummary summary;
  std::vector<Sample> samples;
  auto take = [&](Point c, Label label) {
    Point origin;
    if (!window_at(field, w, c, origin)) {
      ++summary.skipped;
      return;
    }
    samples.push_back(make_sample(field, origin, w, label, Provenance::HardMined, detections.frame_id));
    (label == Label::Positive ? summary.positives : summary.negatives)++;
  };
  for (const auto& [id, j] : verdict.judgments)
    take(detections.detections[static_cast<std::size_t>(id)].position,
         j == Judgment::FalsePositive ? Label::Negative : Label::Positive);
  for (const Point& p : verdict.added) take(p, Label::Positive);

  const std::string hash = verdict.hash();
  return store.locked([&] {
    if (auto prior = store.find_ingest_unlocked(key)) {
      if (prior->verdict_hash != hash) fail(ErrorCode::Conflict, "a different verdict was already submitted for " + key);
      IngestSummary s = prior->summary;
      s.replayed = true;
      return s;
    }
    const DatasetStore::IngestRecord record{key, hash, summary};
    store.add_unlocked(samples, &record);
    return summary;
  });
}

TrainingReport run_training(const DatasetStore& store, const TrainingOptions& options) {
  const FeatureConfig& fc = options.features;
  fc.validate();
  options.train.validate();
  if (fc.window_px() != store.window_px()) fail(ErrorCode::Config, "feature window does not match the store");
  if (!(options.holdout_fraction >= 0 && options.holdout_fraction < 1))
    fail(ErrorCode::Config, "holdout fraction must be in [0, 1)");
  const auto entries = store.entries();
  const bool has_pos = std::any_of(entries.begin(), entries.end(), [](auto& e) { return e.label == Label::Positive; });
  const bool has_neg = std::any_of(entries.begin(), entries.end(), [](auto& e) { return e.label == Label::Negative; });
  if (!has_pos || !has_neg) fail(ErrorCode::EmptyClass, "store needs samples of both classes");

  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(options.train.seed, 0x5eed));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_hold =
      static_cast<std::size_t>(std::ceil(options.holdout_fraction * static_cast<double>(entries.size())));
  const std::size_t n_train = entries.size() - n_hold;

  const std::size_t dim = fc.length();
  RowMatrixXf train_x(static_cast<Eigen::Index>(n_train * kAugmentFactor), static_cast<Eigen::Index>(dim));
  RowMatrixXf hold_x(static_cast<Eigen::Index>(n_hold * kAugmentFactor), static_cast<Eigen::Index>(dim));
  std::vector<double> train_y(n_train * kAugmentFactor), hold_y(n_hold * kAugmentFactor);

  parallel_for(entries.size(), options.threads, [&](std::size_t k) {
    const std::size_t idx = order[k];
    const auto& e = entries[idx];
    Sample s;
    s.patch = store.load_patch(e);
    s.label = e.label;
    const auto aug = augment(s, options.augment, derive_seed(options.train.seed, idx + 1));
    const bool hold = k >= n_train;
    const std::size_t base = (hold ? k - n_train : k) * kAugmentFactor;
    for (int a = 0; a < kAugmentFactor; ++a) {
      const auto f = patch_descriptor(aug[static_cast<std::size_t>(a)].patch, fc);
      auto& m = hold ? hold_x : train_x;
      const auto row = static_cast<Eigen::Index>(base + static_cast<std::size_t>(a));
      for (std::size_t c = 0; c < dim; ++c) m(row, static_cast<Eigen::Index>(c)) = static_cast<float>(f[c]);
      (hold ? hold_y : train_y)[base + static_cast<std::size_t>(a)] = e.label == Label::Positive ? 1.0 : 0.0;
    }
  });

  std::vector<int> dims{static_cast<int>(dim)};
  dims.insert(dims.end(), options.hidden.begin(), options.hidden.end());
  dims.push_back(1);
  MlpModel model = MlpModel::create(dims, options.train.seed, fc);
  TrainResult result = train(std::move(model), train_x, train_y, options.train, n_hold ? &hold_x : nullptr, hold_y);

  TrainingReport report;
  report.model = std::move(result.model);
  report.loss_history = std::move(result.loss_history);
  report.holdout_history = std::move(result.holdout_history);
  report.train_samples = train_y.size();
  report.holdout_samples = hold_y.size();
  if (n_hold) {
    FloatMlp net(report.model);
    std::vector<double> scores(hold_y.size());
    net.score(hold_x, scores);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) correct += (scores[i] >= 0.5) == (hold_y[i] > 0.5);
    report.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(scores.size());
  }
  return report;
}

}  // namespace hahog
