#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "hahog/hahog.h"
#include "json.hpp"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

std::atomic<bool> g_stop{false};

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
  long long seed = -1;
  int threads = 0;
  bool verbose = false;
  bool json_out = false;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// "key = value" lines; '#' starts a comment.
void read_config_file(const std::string& path, json& settings) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(n) + ": expected key = value");
    settings[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
}

void apply_set(const std::string& kv, json& settings) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
  settings[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
}

int exit_code(hahog_status s) {
  switch (s) {
    case HAHOG_OK: return kExitOk;
    case HAHOG_E_INVALID_ARGUMENT:
    case HAHOG_E_CONFIG: return kExitUsage;
    case HAHOG_E_INTERNAL: return kExitInternal;
    default: return kExitData;
  }
}

struct Failure {
  hahog_status status;
  std::string message;
};

void check(hahog_status s) {
  if (s != HAHOG_OK) throw Failure{s, hahog_last_error()};
}

json take(char* s) {
  json j = json::parse(s);
  hahog_string_free(s);
  return j;
}

void on_log(const char* msg, void*) { std::fprintf(stderr, "%s\n", msg); }

void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  Globals g;
  CLI::App app{"Pedestrian localization in overhead depth frames"};
  app.require_subcommand(1);
  app.add_option("--config", g.config_file, "key = value settings file");
  app.add_option("--set", g.sets, "override one setting, key=value (repeatable)");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--threads", g.threads, "worker threads");
  app.add_flag("-v,--verbose", g.verbose, "progress on stderr");
  app.add_flag("--json", g.json_out, "machine-readable output and errors");

  int frames = 80;
  std::string out, corpus, store, model, input, frame, method = "hahog", host = "127.0.0.1", subset, dump;
  std::vector<std::string> det_files;
  double threshold = -1, nms_radius = -1, match_radius = -1;
  int mine_rounds = -1, reps = 20, port = 8080;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--frames", frames, "number of frames")->check(CLI::NonNegativeNumber);
  synth->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "build the sample store and train a classifier");
  train->add_option("--corpus", corpus, "annotated corpus directory");
  train->add_option("--store", store, "sample store directory")->required();
  train->add_option("--out", out, "model file")->required();
  train->add_option("--method", method, "hahog or hog")->check(CLI::IsMember({"hahog", "hog"}));
  train->add_option("--mine-rounds", mine_rounds, "automatic hard-mining rounds against the ground truth");

  auto* det = app.add_subcommand("detect", "localize pedestrians");
  det->add_option("--model", model, "model file");
  det->add_option("--input", input, "corpus directory or raster")->required();
  det->add_option("--out", out, "detections (JSON lines)");
  det->add_option("--method", method, "hahog, hog or cluster")->check(CLI::IsMember({"hahog", "hog", "cluster"}));
  det->add_option("--threshold", threshold, "score threshold");
  det->add_option("--nms-radius", nms_radius, "suppression radius in pixels");
  det->add_option("--dump-features", dump, "print the descriptor of the window at X,Y instead of detecting");

  auto* ev = app.add_subcommand("eval", "score detections against annotations");
  ev->add_option("--corpus", corpus, "annotated corpus directory")->required();
  ev->add_option("--detections", det_files, "detection files, one per method")->required();
  ev->add_option("--out", out, "report CSV")->required();
  ev->add_option("--match-radius", match_radius, "match radius in mm");
  ev->add_option("--subset", subset, "all or distractors")->check(CLI::IsMember({"all", "distractors"}));

  auto* bench = app.add_subcommand("bench", "detection throughput");
  bench->add_option("--model", model, "model file")->required();
  bench->add_option("--frame", frame, "raster")->required();
  bench->add_option("--reps", reps, "repetitions")->check(CLI::PositiveNumber);

  auto* serve = app.add_subcommand("serve", "run the review service");
  serve->add_option("--model", model, "model file")->required();
  serve->add_option("--corpus", corpus, "corpus directory")->required();
  serve->add_option("--store", store, "sample store directory")->required();
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port, 0 for any");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto report_error = [&](const std::string& code, const std::string& msg) {
    if (g.json_out) std::cerr << json{{"error", code}, {"message", msg}}.dump() << "\n";
    else std::cerr << "error: " << msg << "\n";
  };

  try {
    json settings = json::object();
    if (!g.config_file.empty()) read_config_file(g.config_file, settings);
    for (const auto& kv : g.sets) apply_set(kv, settings);
    if (g.seed >= 0) settings["seed"] = std::to_string(g.seed);
    if (g.threads > 0) settings["threads"] = std::to_string(g.threads);
    if (threshold >= 0) settings["detect.threshold"] = std::to_string(threshold);
    if (nms_radius >= 0) settings["detect.nms_radius_px"] = std::to_string(nms_radius);
    if (match_radius >= 0) settings["eval.match_radius_mm"] = std::to_string(match_radius);
    if (!subset.empty()) settings["eval.subset"] = subset;
    if (mine_rounds >= 0) settings["mine.rounds"] = std::to_string(mine_rounds);
    const std::string cfg = settings.dump();

    char* eff = nullptr;
    check(hahog_settings_effective(cfg.c_str(), &eff));
    const json effective = take(eff);
    if (g.verbose) hahog_set_log(on_log, nullptr);

    json result;
    char* res = nullptr;
    if (*synth) {
      check(hahog_synth(cfg.c_str(), frames, out.c_str(), &res));
    } else if (*train) {
      check(hahog_train(cfg.c_str(), method.c_str(), corpus.empty() ? nullptr : corpus.c_str(), store.c_str(),
                        out.c_str(), &res));
    } else if (*det) {
      if (!dump.empty()) {
        int x = 0, y = 0;
        if (std::sscanf(dump.c_str(), "%d,%d", &x, &y) != 2) throw UsageError("--dump-features expects X,Y");
        check(hahog_dump_features(cfg.c_str(), method.c_str(), input.c_str(), x, y, &res));
        json f = take(res);
        res = nullptr;
        result = {{"method", method}, {"x", x}, {"y", y}, {"length", f.size()}, {"features", f}};
      } else {
        if (out.empty()) throw UsageError("detect needs --out");
        if (method != "cluster" && model.empty()) throw UsageError("--model is required for " + method);
        check(hahog_detect_corpus(cfg.c_str(), method.c_str(), model.empty() ? nullptr : model.c_str(),
                                  input.c_str(), out.c_str(), &res));
      }
    } else if (*ev) {
      std::vector<const char*> files;
      for (const auto& f : det_files) files.push_back(f.c_str());
      check(hahog_eval(cfg.c_str(), corpus.c_str(), files.data(), files.size(), out.c_str(), &res));
    } else if (*bench) {
      check(hahog_bench(cfg.c_str(), model.c_str(), frame.c_str(), reps, &res));
    } else if (*serve) {
      hahog_service* svc = nullptr;
      int bound = 0;
      check(hahog_service_start(cfg.c_str(), corpus.c_str(), store.c_str(), model.c_str(), host.c_str(), port, &svc,
                                &bound));
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      if (g.json_out) std::cout << json{{"config", effective}, {"listening", host + ":" + std::to_string(bound)}}.dump() << std::endl;
      else std::cout << "listening on " << host << ":" << bound << std::endl;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      const hahog_status st = hahog_service_stop(svc);
      hahog_service_wait(svc);
      hahog_service_free(svc);
      check(st);
      return kExitOk;
    }
    if (res) result = take(res);

    if (g.json_out) {
      std::cout << json{{"config", effective}, {"result", result}}.dump() << "\n";
    } else {
      std::cout << "# effective config\n";
      for (const auto& [k, v] : effective.items()) std::cout << k << " = " << v.get<std::string>() << "\n";
      std::cout << "# result\n" << result.dump(2) << "\n";
    }
    return kExitOk;
  } catch (const UsageError& e) {
    report_error("usage", e.what());
    return kExitUsage;
  } catch (const Failure& f) {
    report_error(hahog_status_name(f.status), f.message);
    return exit_code(f.status);
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return kExitInternal;
  }
}
