#include "core/service.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <thread>

#include "core/errors.hpp"
#include "core/synth.hpp"
#include "core/training.hpp"
#include "httplib.h"
#include "json.hpp"

namespace hahog {

using nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

HttpError http_error(const Error& e) {
  switch (e.code()) {
    case ErrorCode::NotFound: return {404, "not-found", e.what()};
    case ErrorCode::Conflict: return {409, "conflict", e.what()};
    case ErrorCode::Format:
    case ErrorCode::InvalidArgument: return {400, "bad-request", e.what()};
    case ErrorCode::Bounds: return {422, "out-of-bounds", e.what()};
    default: return {500, "internal", e.what()};
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, const HttpError& e) {
  send_json(res, {{"error", e.code}, {"message", e.message}}, e.status);
}

json detections_json(const DetectionSet& d, const std::string& model_hash) {
  json j = json::parse(detections_to_json_line(d));
  for (std::size_t i = 0; i < j["detections"].size(); ++i) j["detections"][i]["id"] = i;
  j["model_hash"] = model_hash;
  return j;
}

}  // namespace

struct AnnotationService::Impl {
  ServiceConfig cfg;
  Corpus corpus;
  DatasetStore store;
  httplib::Server server;
  std::thread thread;
  int bound_port = -1;

  std::shared_mutex model_mutex;
  std::shared_ptr<const MlpModel> model;
  std::string model_hash;

  std::mutex state_mutex;
  std::vector<std::string> queue;
  std::size_t cursor = 0;
  std::map<std::string, std::string> reviewed;  // frame_id -> verdict hash
  std::map<std::pair<std::string, std::string>, DetectionSet> cache;

  explicit Impl(ServiceConfig c)
      : cfg(std::move(c)),
        corpus(read_corpus(cfg.corpus_dir)),
        store(cfg.store_dir, hahog::load_model(cfg.model_path).feature_config.window_px()) {
    cfg.detector.validate();
    set_model(cfg.model_path);
    for (const auto& e : corpus.entries) queue.push_back(e.frame_id);
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(queue.begin(), queue.end(), rng);
    for (const auto& r : store.ingests())
      if (corpus.find(r.key)) reviewed[r.key] = r.verdict_hash;
    routes();
  }

  void set_model(const std::filesystem::path& path) {
    auto m = std::make_shared<const MlpModel>(hahog::load_model(path));
    if (m->feature_config.window_px() != store.window_px())
      fail(ErrorCode::Config, "model window does not match the store");
    const std::string h = hahog::model_hash(*m);
    std::unique_lock lock(model_mutex);
    model = std::move(m);
    model_hash = h;
  }

  std::pair<std::shared_ptr<const MlpModel>, std::string> current_model() {
    std::shared_lock lock(model_mutex);
    return {model, model_hash};
  }

  const CorpusEntry& entry(const std::string& id) const {
    const CorpusEntry* e = corpus.find(id);
    if (!e) fail(ErrorCode::NotFound, "unknown frame '" + id + "'");
    return *e;
  }

  // Detections of the current model, computed on first request.
  std::pair<DetectionSet, std::string> detections(const std::string& id) {
    const CorpusEntry& e = entry(id);
    auto [m, hash] = current_model();
    {
      std::lock_guard lock(state_mutex);
      auto it = cache.find({id, hash});
      if (it != cache.end()) return {it->second, hash};
    }
    const FrameRecord rec = load_frame(e.raster);
    DetectionSet d = detect(rec.frame, rec.calib, *m, cfg.detector, cfg.threads);
    d.frame_id = id;
    std::lock_guard lock(state_mutex);
    auto [it, _] = cache.emplace(std::make_pair(id, hash), std::move(d));
    return {it->second, hash};
  }

  json review_item(const std::string& id) {
    const CorpusEntry& e = entry(id);
    const FrameRecord rec = load_frame(e.raster);
    auto [d, hash] = detections(id);
    std::string status;
    {
      std::lock_guard lock(state_mutex);
      status = reviewed.count(id) ? "reviewed" : "pending";
    }
    return {{"frame_id", id},
            {"status", status},
            {"raster", "/frames/" + id + ".pgm"},
            {"meta", meta(id, rec)},
            {"detections", detections_json(d, hash)}};
  }

  static json meta(const std::string& id, const FrameRecord& rec) {
    return {{"frame_id", id},
            {"width", rec.frame.width},
            {"height", rec.frame.height},
            {"sensor_height_mm", rec.calib.sensor_height_mm},
            {"scale_mm_per_px", rec.calib.scale_mm_per_px}};
  }

  json next_review() {
    std::string id;
    std::size_t remaining = 0;
    {
      std::lock_guard lock(state_mutex);
      while (cursor < queue.size() && reviewed.count(queue[cursor])) ++cursor;
      if (cursor >= queue.size()) return {{"empty", true}};
      id = queue[cursor++];
      for (std::size_t i = cursor; i < queue.size(); ++i) remaining += reviewed.count(queue[i]) ? 0 : 1;
    }
    json item = review_item(id);
    item["empty"] = false;
    item["remaining"] = remaining;
    return item;
  }

  json submit(const std::string& id, const std::string& body) {
    const CorpusEntry& e = entry(id);
    const Verdict v = Verdict::from_json(body);
    auto [d, hash] = detections(id);
    for (const auto& [k, _] : v.judgments)
      if (k < 0 || static_cast<std::size_t>(k) >= d.detections.size())
        throw HttpError{422, "unknown-detection", "no detection with id " + std::to_string(k)};
    const FrameRecord rec = load_frame(e.raster);
    auto [m, _] = current_model();
    const IngestSummary s =
        ingest_hard_mined(store, id, to_height_field(rec.frame, rec.calib), d, v, m->feature_config);
    {
      std::lock_guard lock(state_mutex);
      reviewed[id] = v.hash();
    }
    return {{"frame_id", id},
            {"positives", s.positives},
            {"negatives", s.negatives},
            {"skipped", s.skipped},
            {"replayed", s.replayed}};
  }

  json stats() {
    const auto c = store.counts();
    const auto ingests = store.ingests();
    std::size_t n_reviewed;
    {
      std::lock_guard lock(state_mutex);
      n_reviewed = reviewed.size();
    }
    return {{"positive", c.positive},
            {"negative", c.negative},
            {"total_positive", c.total_positive()},
            {"total_negative", c.total_negative()},
            {"ingests", ingests.size()},
            {"frames", corpus.entries.size()},
            {"reviewed", n_reviewed}};
  }

  template <typename Fn>
  static httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const HttpError& e) {
        send_error(res, e);
      } catch (const Error& e) {
        send_error(res, http_error(e));
      } catch (const std::exception& e) {
        send_error(res, {500, "internal", e.what()});
      }
    };
  }

  void routes() {
    // SO_REUSEADDR only: with SO_REUSEPORT a second instance would silently share the port.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto c = store.counts();
      send_json(res, {{"status", "ok"},
                      {"model_hash", current_model().second},
                      {"store", {{"positive", c.total_positive()}, {"negative", c.total_negative()}}}});
    }));
    server.Get("/review/next", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, next_review());
    }));
    server.Get(R"(/frames/([^/]+)\.pgm)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      res.set_content(read_file(entry(req.matches[1]).raster), "image/x-portable-graymap");
    }));
    server.Get(R"(/frames/([^/]+)/meta)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      send_json(res, meta(id, load_frame(entry(id).raster)));
    }));
    server.Get(R"(/frames/([^/]+)/detections)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto [d, hash] = detections(req.matches[1]);
      send_json(res, detections_json(d, hash));
    }));
    server.Post(R"(/frames/([^/]+)/verdict)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, submit(req.matches[1], req.body));
    }));
    server.Get("/store/stats", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, stats());
    }));
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) send_json(res, {{"error", "not-found"}, {"message", "no such endpoint"}}, res.status);
    });
  }
};

AnnotationService::AnnotationService(ServiceConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

AnnotationService::~AnnotationService() {
  stop();
  wait();
}

int AnnotationService::start() {
  if (impl_->thread.joinable()) return impl_->bound_port;
  auto& s = impl_->server;
  const int port = impl_->cfg.port == 0 ? s.bind_to_any_port(impl_->cfg.host)
                                        : (s.bind_to_port(impl_->cfg.host, impl_->cfg.port) ? impl_->cfg.port : -1);
  if (port < 0)
    fail(ErrorCode::Io, "cannot bind " + impl_->cfg.host + ":" + std::to_string(impl_->cfg.port));
  impl_->bound_port = port;
  impl_->thread = std::thread([&s] { s.listen_after_bind(); });
  s.wait_until_ready();
  return port;
}

void AnnotationService::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void AnnotationService::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
  impl_->store.flush();
}

int AnnotationService::port() const { return impl_->bound_port; }

void AnnotationService::load_model(const std::filesystem::path& path) { impl_->set_model(path); }

}  // namespace hahog
