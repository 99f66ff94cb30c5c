#include <set>
#include <thread>

#include "core/mlp.hpp"
#include "core/service.hpp"
#include "core/synth.hpp"
#include "core/training.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "oracles.hpp"

using namespace hahog;
using nlohmann::json;

namespace {

// A corpus and a model that fires everywhere, so every frame has detections.
struct Fixture {
  oracle::TempDir dir;
  std::filesystem::path corpus, store, model;
  std::string hash;

  Fixture() : corpus(dir.path / "corpus"), store(dir.path / "store"), model(dir.path / "m.bin") {
    SceneConfig sc;
    sc.width = 200;
    sc.height = 170;
    sc.count_max = 4;
    sc.spacing_mm = {450, 900};
    write_corpus(corpus, generate_corpus(sc, 5, 8), sc, 8);
    const FeatureConfig fc;
    MlpModel m = MlpModel::create({static_cast<int>(fc.length()), 4, 1}, 1, fc);
    m.layers.back().bias(0) = 50.0;
    save_model(m, model);
    hash = model_hash(load_model(model));
  }

  ServiceConfig config() const {
    ServiceConfig c;
    c.corpus_dir = corpus;
    c.store_dir = store;
    c.model_path = model;
    c.port = 0;
    c.seed = 4;
    return c;
  }
};

json get_json(httplib::Client& cli, const std::string& path, int expect = 200) {
  auto r = cli.Get(path);
  REQUIRE(r);
  CHECK(r->status == expect);
  CHECK(r->get_header_value("Content-Type").find("application/json") == 0);
  return json::parse(r->body);
}

httplib::Result post(httplib::Client& cli, const std::string& id, const json& body) {
  return cli.Post("/frames/" + id + "/verdict", body.dump(), "application/json");
}

}  // namespace

TEST_CASE("review loop over HTTP") {
  Fixture fx;
  AnnotationService svc(fx.config());
  const int port = svc.start();
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);

  const json health = get_json(cli, "/health");
  CHECK(health.at("status") == "ok");
  CHECK(health.at("model_hash") == fx.hash);
  CHECK(health.at("store").at("positive") == 0);

  // The queue hands out every frame once, then reports empty.
  std::set<std::string> seen;
  json first;
  for (int k = 0; k < 5; ++k) {
    const json item = get_json(cli, "/review/next");
    REQUIRE(item.at("empty") == false);
    CHECK(item.at("status") == "pending");
    CHECK(item.at("remaining") == 4 - k);
    CHECK(item.at("detections").at("model_hash") == fx.hash);
    seen.insert(item.at("frame_id").get<std::string>());
    if (k == 0) first = item;
  }
  CHECK(seen.size() == 5);
  CHECK(get_json(cli, "/review/next").at("empty") == true);

  const std::string id = first.at("frame_id");
  const Corpus corpus = read_corpus(fx.corpus);
  auto raster = cli.Get(first.at("raster").get<std::string>());
  REQUIRE(raster);
  CHECK(raster->status == 200);
  CHECK(raster->body == read_file(corpus.find(id)->raster));

  const json meta = get_json(cli, "/frames/" + id + "/meta");
  CHECK(meta.at("width") == 200);
  CHECK(meta.at("scale_mm_per_px") == 10.0);

  const json dets = get_json(cli, "/frames/" + id + "/detections");
  CHECK(dets == first.at("detections"));
  const auto& list = dets.at("detections");
  REQUIRE(list.size() >= 2);
  for (std::size_t i = 0; i < list.size(); ++i) CHECK(list[i].at("id") == i);

  const json verdict = {{"judgments", {{{"id", 0}, {"judgment", "correct"}}, {{"id", 1}, {"judgment", "false-positive"}}}},
                        {"added", {{{"x", 100}, {"y", 85}}}},
                        {"note", ""}};
  auto r = post(cli, id, verdict);
  REQUIRE(r);
  CHECK(r->status == 200);
  json s = json::parse(r->body);
  CHECK(s.at("positives") == 2);
  CHECK(s.at("negatives") == 1);
  CHECK(s.at("replayed") == false);

  // Same verdict again: replayed, nothing new stored.
  r = post(cli, id, verdict);
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body).at("replayed") == true);
  CHECK(get_json(cli, "/store/stats").at("total_positive") == 2);

  json changed = verdict;
  changed["note"] = "second thoughts";
  r = post(cli, id, changed);
  REQUIRE(r);
  CHECK(r->status == 409);
  CHECK(json::parse(r->body).at("error") == "conflict");

  const std::string other = *seen.begin() == id ? *std::next(seen.begin()) : *seen.begin();
  r = post(cli, other, {{"judgments", {{{"id", 100000}, {"judgment", "correct"}}}}});
  REQUIRE(r);
  CHECK(r->status == 422);
  CHECK(json::parse(r->body).at("error") == "unknown-detection");
  r = post(cli, other, {{"added", {{{"x", 5000}, {"y", 1}}}}});
  REQUIRE(r);
  CHECK(r->status == 422);
  r = cli.Post("/frames/" + other + "/verdict", "{nope", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  r = post(cli, "no-such-frame", json::object());
  REQUIRE(r);
  CHECK(r->status == 404);
  get_json(cli, "/frames/no-such-frame/meta", 404);
  CHECK(get_json(cli, "/nothing/here", 404).at("error") == "not-found");

  auto opt = cli.Options("/frames/" + id + "/verdict");
  REQUIRE(opt);
  CHECK(opt->status == 204);
  CHECK(opt->get_header_value("Access-Control-Allow-Origin") == "*");

  const json stats = get_json(cli, "/store/stats");
  CHECK(stats.at("ingests") == 1);
  CHECK(stats.at("reviewed") == 1);
  CHECK(stats.at("frames") == 5);
  svc.stop();
  svc.wait();
}

TEST_CASE("concurrent verdicts each leave one ingest record") {
  Fixture fx;
  AnnotationService svc(fx.config());
  const int port = svc.start();
  const Corpus corpus = read_corpus(fx.corpus);
  std::vector<std::thread> pool;
  std::vector<int> status(corpus.entries.size(), 0);
  for (std::size_t i = 0; i < corpus.entries.size(); ++i)
    pool.emplace_back([&, i] {
      httplib::Client cli("127.0.0.1", port);
      const json v = {{"judgments", {{{"id", 0}, {"judgment", i % 2 ? "correct" : "false-positive"}}}}};
      auto r = post(cli, corpus.entries[i].frame_id, v);
      status[i] = r ? r->status : -1;
    });
  for (auto& t : pool) t.join();
  for (int s : status) CHECK(s == 200);
  svc.stop();
  svc.wait();

  DatasetStore store(fx.store, FeatureConfig{}.window_px());
  CHECK(store.ingests().size() == corpus.entries.size());
  CHECK(store.recount_files() ==
        std::pair<int, int>{store.counts().total_positive(), store.counts().total_negative()});

  // A restarted service knows every frame is reviewed.
  AnnotationService again(fx.config());
  httplib::Client cli("127.0.0.1", again.start());
  CHECK(get_json(cli, "/review/next").at("empty") == true);
  CHECK(get_json(cli, "/store/stats").at("reviewed") == corpus.entries.size());
  again.stop();
}

TEST_CASE("port conflicts and bad models fail at start-up") {
  Fixture fx;
  AnnotationService a(fx.config());
  const int port = a.start();
  ServiceConfig c = fx.config();
  c.port = port;
  AnnotationService b(c);
  CHECK_THROWS_AS(b.start(), Error);
  c.model_path = fx.dir.path / "missing.bin";
  CHECK_THROWS_AS(AnnotationService{c}, Error);
  a.stop();
}
