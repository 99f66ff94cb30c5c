#include <cmath>
#include <random>

#include "core/errors.hpp"
#include "core/mlp.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace hahog;
using oracle::code_of;

namespace {

FeatureConfig tiny_features() {
  FeatureConfig f;
  f.window_cells = 2;
  f.n_height_bins = 4;
  return f;  // 2*2*8 + 4 = 36
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

// Layer-by-layer forward pass with explicit loops.
double naive_forward(const MlpModel& m, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (const Layer& l : m.layers) {
    std::vector<double> z(static_cast<std::size_t>(l.weights.rows()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      double s = l.bias(r);
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) s += l.weights(r, c) * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = l.activation == Activation::Relu ? std::max(0.0, s) : 1.0 / (1.0 + std::exp(-s));
    }
    a = std::move(z);
  }
  return a[0];
}

// Two separable blobs in feature space.
void blobs(int n, int dim, std::uint64_t seed, RowMatrixXf& x, std::vector<double>& y) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 0.5f);
  x.resize(n, dim);
  y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double label = i % 2;
    y[static_cast<std::size_t>(i)] = label;
    for (int c = 0; c < dim; ++c) x(i, c) = g(rng) + (label > 0 ? 1.0f : -1.0f) * (c % 3 == 0 ? 1.0f : 0.0f);
  }
}

}  // namespace

TEST_CASE("create: shapes, activations, initial weight range") {
  const MlpModel m = MlpModel::create({36, 8, 4, 1}, 7, tiny_features());
  CHECK(m.layer_dims() == std::vector<int>{36, 8, 4, 1});
  CHECK(m.parameter_count() == 36 * 8 + 8 + 8 * 4 + 4 + 4 + 1);
  CHECK(m.layers[0].activation == Activation::Relu);
  CHECK(m.layers[2].activation == Activation::Logistic);
  CHECK(m.layers[0].weights.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 36));
  CHECK(m.layers[1].bias.isZero());
  CHECK_THROWS_AS(MlpModel::create({36, 8, 2}, 1), Error);
  CHECK_THROWS_AS(MlpModel::create({36}, 1), Error);
  CHECK_THROWS_AS(MlpModel::create({36, 0, 1}, 1), Error);
}

TEST_CASE("forward matches a loop-based oracle and stays inside (0, 1)") {
  std::mt19937_64 rng(11);
  const MlpModel m = MlpModel::create({36, 10, 5, 1}, 3, tiny_features());
  for (int k = 0; k < 50; ++k) {
    const auto x = random_vec(36, rng);
    const double a = m.forward(x);
    CHECK(a == doctest::Approx(naive_forward(m, x)).epsilon(1e-12));
    CHECK(a > 0.0);
    CHECK(a < 1.0);
  }
  MlpModel big = m;
  big.layers.back().bias(0) = 1e4;
  CHECK(big.forward(random_vec(36, rng)) < 1.0);
  big.layers.back().bias(0) = -1e4;
  CHECK(big.forward(random_vec(36, rng)) > 0.0);
  CHECK(code_of([&] { m.forward(std::vector<double>(35, 0.0)); }) == ErrorCode::Dimension);
}

TEST_CASE("sample loss is binary cross-entropy") {
  std::mt19937_64 rng(5);
  const MlpModel m = MlpModel::create({36, 6, 1}, 9, tiny_features());
  for (int k = 0; k < 20; ++k) {
    const auto x = random_vec(36, rng);
    const double a = naive_forward(m, x);
    CHECK(sample_loss(m, x, 1.0) == doctest::Approx(-std::log(a)).epsilon(1e-9));
    CHECK(sample_loss(m, x, 0.0) == doctest::Approx(-std::log(1.0 - a)).epsilon(1e-9));
  }
  // Saturated logits keep a finite, linear loss.
  MlpModel sat = m;
  sat.layers.back().weights.setZero();
  sat.layers.back().bias(0) = 800.0;
  const auto x = random_vec(36, rng);
  CHECK(sample_loss(sat, x, 0.0) == doctest::Approx(800.0));
  CHECK(sample_loss(sat, x, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("back-propagation agrees with central differences") {
  std::mt19937_64 rng(21);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const MlpModel m = MlpModel::create({36, 12, 6, 1}, seed, tiny_features());
    const auto x = random_vec(36, rng);
    CHECK(grad_check(m, x, 1.0) < 1e-4);
    CHECK(grad_check(m, x, 0.0) < 1e-4);
  }
}

TEST_CASE("training separates two blobs and is deterministic") {
  RowMatrixXf x;
  std::vector<double> y;
  blobs(400, 36, 4, x, y);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.learning_rate = 5e-3;
  cfg.seed = 77;
  const MlpModel init = MlpModel::create({36, 16, 1}, 3, tiny_features());
  const TrainResult a = train(init, x, y, cfg);
  const TrainResult b = train(init, x, y, cfg);
  REQUIRE_FALSE(a.loss_history.empty());
  CHECK(a.loss_history.back() < 0.5 * mean_loss(init, x, y));
  CHECK(serialize_model(a.model) == serialize_model(b.model));
  CHECK(a.loss_history == b.loss_history);

  std::vector<double> s(static_cast<std::size_t>(x.rows()));
  FloatMlp(a.model).score(x, s);
  int correct = 0;
  for (std::size_t i = 0; i < s.size(); ++i) correct += (s[i] >= 0.5) == (y[i] > 0.5);
  CHECK(correct >= 390);

  cfg.seed = 78;
  CHECK(serialize_model(train(init, x, y, cfg).model) != serialize_model(a.model));
}

TEST_CASE("training returns the best epoch on the holdout") {
  RowMatrixXf x, hx;
  std::vector<double> y, hy;
  blobs(200, 36, 1, x, y);
  blobs(60, 36, 2, hx, hy);
  TrainConfig cfg;
  cfg.epochs = 12;
  const TrainResult r = train(MlpModel::create({36, 8, 1}, 1, tiny_features()), x, y, cfg, &hx, hy);
  REQUIRE(r.holdout_history.size() == r.loss_history.size());
  REQUIRE(r.best_epoch >= 0);
  const double best = r.holdout_history[static_cast<std::size_t>(r.best_epoch)];
  for (double h : r.holdout_history) CHECK(best <= h);
  CHECK(mean_loss(r.model, hx, hy) == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("training input validation") {
  RowMatrixXf x;
  std::vector<double> y;
  blobs(20, 36, 1, x, y);
  const MlpModel m = MlpModel::create({36, 4, 1}, 1, tiny_features());
  TrainConfig cfg;
  cfg.epochs = 1;
  std::vector<double> ones(20, 1.0);
  CHECK(code_of([&] { train(m, x, ones, cfg); }) == ErrorCode::EmptyClass);
  std::vector<double> bad = y;
  bad[3] = 0.5;
  CHECK(code_of([&] { train(m, x, bad, cfg); }) == ErrorCode::InvalidArgument);
  std::vector<double> short_y(y.begin(), y.end() - 1);
  CHECK(code_of([&] { train(m, x, short_y, cfg); }) == ErrorCode::Dimension);
  RowMatrixXf nan_x = x;
  nan_x(2, 2) = std::nanf("");
  CHECK(code_of([&] { train(m, nan_x, y, cfg); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { train(MlpModel::create({35, 4, 1}, 1), x, y, cfg); }) == ErrorCode::Dimension);
  cfg.learning_rate = 0;
  CHECK(code_of([&] { train(m, x, y, cfg); }) == ErrorCode::Config);
}

TEST_CASE("single precision scoring tracks the double model") {
  std::mt19937_64 rng(8);
  const MlpModel m = MlpModel::create({36, 10, 1}, 12, tiny_features());
  RowMatrixXf x(30, 36);
  for (int i = 0; i < 30; ++i) {
    const auto v = random_vec(36, rng);
    for (int c = 0; c < 36; ++c) x(i, c) = static_cast<float>(v[static_cast<std::size_t>(c)]);
  }
  std::vector<double> s(30);
  FloatMlp(m).score(x, s);
  for (int i = 0; i < 30; ++i) {
    std::vector<double> v(36);
    for (int c = 0; c < 36; ++c) v[static_cast<std::size_t>(c)] = x(i, c);
    CHECK(std::abs(s[static_cast<std::size_t>(i)] - m.forward(v)) < 1e-5);
  }
  CHECK_THROWS_AS(FloatMlp(m).score(RowMatrixXf(1, 35), s), Error);
}

TEST_CASE("model file round-trip and corruption") {
  MlpModel m = MlpModel::create({36, 5, 1}, 2, tiny_features());
  // Round through float32 so the reloaded model is bit-identical.
  m = deserialize_model(serialize_model(m));
  const std::string bytes = serialize_model(m);
  CHECK(bytes.rfind(std::string("HAHOG-MLP\x01"), 0) == 0);
  const MlpModel back = deserialize_model(bytes);
  CHECK(serialize_model(back) == bytes);
  CHECK(back.feature_config.to_json() == m.feature_config.to_json());
  CHECK(model_hash(back) == model_hash(m));
  CHECK(model_hash(back).size() == 16);

  oracle::TempDir dir;
  save_model(m, dir.path / "m.bin");
  CHECK(serialize_model(load_model(dir.path / "m.bin")) == bytes);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(code_of([&] { deserialize_model(bad_magic); }) == ErrorCode::MalformedHeader);
  CHECK(code_of([&] { deserialize_model("HAHOG"); }) == ErrorCode::MalformedHeader);
  CHECK(code_of([&] { deserialize_model(bytes.substr(0, 20)); }) == ErrorCode::TruncatedPayload);
  CHECK(code_of([&] { deserialize_model(bytes.substr(0, bytes.size() - 1)); }) == ErrorCode::TruncatedPayload);
  CHECK(code_of([&] { deserialize_model(bytes + "x"); }) == ErrorCode::Format);
  CHECK(code_of([&] { load_model(dir.path / "none.bin"); }) == ErrorCode::Io);

  // Header that disagrees with its own feature configuration.
  MlpModel wrong = MlpModel::create({36, 5, 1}, 2, FeatureConfig{});
  CHECK(code_of([&] { deserialize_model(serialize_model(wrong)); }) == ErrorCode::Format);
}
