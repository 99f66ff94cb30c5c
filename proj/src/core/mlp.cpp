#include "core/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

#include "core/errors.hpp"
#include "core/hash.hpp"
#include "json.hpp"

namespace hahog {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "HAHOG-MLP\x01";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Keeps the score strictly inside (0, 1) even when the logistic saturates.
double clamp_open(double a) {
  return std::clamp(a, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
}

double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

const char* activation_name(Activation a) { return a == Activation::Relu ? "relu" : "logistic"; }

Activation activation_from_name(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "logistic") return Activation::Logistic;
  fail(ErrorCode::Format, "unknown activation '" + s + "'");
}

// Pre-activations of every layer for one sample.
std::vector<Eigen::VectorXd> forward_trace(const MlpModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.input_dim())
    fail(ErrorCode::Dimension, "feature length " + std::to_string(x.size()) + " does not match model input " +
                                   std::to_string(model.input_dim()));
  std::vector<Eigen::VectorXd> zs;
  zs.reserve(model.layers.size());
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  for (const Layer& layer : model.layers) {
    Eigen::VectorXd z = layer.weights * a + layer.bias;
    zs.push_back(z);
    if (layer.activation == Activation::Relu)
      a = z.cwiseMax(0.0);
    else
      a = z.unaryExpr([](double v) { return logistic(v); });
  }
  return zs;
}

void check_model(const MlpModel& model) {
  if (model.layers.empty()) fail(ErrorCode::Config, "model has no layers");
  if (model.layers.back().weights.rows() != 1 || model.layers.back().activation != Activation::Logistic)
    fail(ErrorCode::Config, "output layer must be a single logistic unit");
  for (std::size_t l = 1; l < model.layers.size(); ++l)
    if (model.layers[l].weights.cols() != model.layers[l - 1].weights.rows())
      fail(ErrorCode::Config, "layer shapes are inconsistent");
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

}  // namespace

MlpModel MlpModel::create(const std::vector<int>& dims, std::uint64_t seed, const FeatureConfig& features) {
  if (dims.size() < 2 || dims.back() != 1) fail(ErrorCode::Config, "layer dims must be {input, ..., 1}");
  for (int d : dims)
    if (d < 1) fail(ErrorCode::Config, "layer dims must be positive");
  std::mt19937_64 rng(seed);
  MlpModel m;
  m.feature_config = features;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    const double limit = std::sqrt(6.0 / dims[l]);
    std::uniform_real_distribution<double> u(-limit, limit);
    layer.weights.resize(dims[l + 1], dims[l]);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = u(rng);
    layer.bias = Eigen::VectorXd::Zero(dims[l + 1]);
    layer.activation = (l + 2 == dims.size()) ? Activation::Logistic : Activation::Relu;
    m.layers.push_back(std::move(layer));
  }
  return m;
}

std::vector<int> MlpModel::layer_dims() const {
  std::vector<int> dims;
  if (layers.empty()) return dims;
  dims.push_back(static_cast<int>(layers.front().weights.cols()));
  for (const Layer& l : layers) dims.push_back(static_cast<int>(l.weights.rows()));
  return dims;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

double MlpModel::forward(std::span<const double> x) const {
  check_model(*this);
  auto zs = forward_trace(*this, x);
  return clamp_open(logistic(zs.back()(0)));
}

double sample_loss(const MlpModel& model, std::span<const double> x, double y) {
  auto zs = forward_trace(model, x);
  return bce_from_logit(zs.back()(0), y);
}

Gradient backprop(const MlpModel& model, std::span<const double> x, double y) {
  check_model(model);
  auto zs = forward_trace(model, x);
  const std::size_t L = model.layers.size();
  Gradient g;
  g.weights.resize(L);
  g.bias.resize(L);
  Eigen::VectorXd delta(1);
  delta(0) = logistic(zs.back()(0)) - y;
  for (std::size_t k = L; k-- > 0;) {
    Eigen::VectorXd a_prev;
    if (k == 0)
      a_prev = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    else
      a_prev = zs[k - 1].cwiseMax(0.0);
    g.weights[k] = delta * a_prev.transpose();
    g.bias[k] = delta;
    if (k > 0) {
      Eigen::VectorXd back = model.layers[k].weights.transpose() * delta;
      delta = back.array() * (zs[k - 1].array() > 0.0).cast<double>();
    }
  }
  return g;
}

double grad_check(const MlpModel& model, std::span<const double> x, double y, double step) {
  const Gradient g = backprop(model, x, y);
  MlpModel probe = model;

  auto relu_pattern = [&](const MlpModel& m) {
    std::vector<bool> pattern;
    auto zs = forward_trace(m, x);
    for (std::size_t k = 0; k + 1 < zs.size(); ++k)
      for (Eigen::Index i = 0; i < zs[k].size(); ++i) pattern.push_back(zs[k](i) > 0.0);
    return pattern;
  };
  const auto base_pattern = relu_pattern(model);

  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + step;
    const double up = sample_loss(probe, x, y);
    const bool up_same = relu_pattern(probe) == base_pattern;
    param = saved - step;
    const double down = sample_loss(probe, x, y);
    const bool down_same = relu_pattern(probe) == base_pattern;
    param = saved;
    // A rectifier switching inside the stencil makes the loss non-differentiable there.
    if (!up_same || !down_same) return;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic) + std::abs(numeric), 1e-7});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };

  for (std::size_t k = 0; k < probe.layers.size(); ++k) {
    Layer& layer = probe.layers[k];
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) check(layer.weights(r, c), g.weights[k](r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) check(layer.bias(r), g.bias[k](r));
  }
  return worst;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorCode::Config, "learning_rate must be positive");
  if (batch_size < 1) fail(ErrorCode::Config, "batch_size must be positive");
  if (epochs < 0) fail(ErrorCode::Config, "epochs must be non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    fail(ErrorCode::Config, "moment parameters must lie in (0, 1)");
  if (!(epsilon > 0.0)) fail(ErrorCode::Config, "epsilon must be positive");
  if (patience < 1) fail(ErrorCode::Config, "patience must be positive");
}

namespace {

struct BatchTrace {
  std::vector<Eigen::MatrixXd> z;  // per layer, rows = samples
};

// Forward pass over a batch; returns pre-activations per layer.
BatchTrace forward_batch(const MlpModel& model, const Eigen::MatrixXd& x) {
  BatchTrace t;
  Eigen::MatrixXd a = x;
  for (const Layer& layer : model.layers) {
    Eigen::MatrixXd z = a * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    if (layer.activation == Activation::Relu)
      a = z.cwiseMax(0.0);
    else
      a = z;  // only the output layer is logistic; handled by the caller
    t.z.push_back(std::move(z));
  }
  return t;
}

Eigen::MatrixXd gather_rows(const RowMatrixXf& src, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
  return out;
}

}  // namespace

double mean_loss(const MlpModel& model, const RowMatrixXf& features, std::span<const double> labels) {
  check_model(model);
  if (features.rows() == 0) return 0.0;
  constexpr Eigen::Index kChunk = 1024;
  double total = 0.0;
  std::vector<std::size_t> rows;
  for (Eigen::Index start = 0; start < features.rows(); start += kChunk) {
    const Eigen::Index end = std::min(features.rows(), start + kChunk);
    rows.resize(static_cast<std::size_t>(end - start));
    std::iota(rows.begin(), rows.end(), static_cast<std::size_t>(start));
    const BatchTrace t = forward_batch(model, gather_rows(features, rows));
    for (Eigen::Index i = 0; i < end - start; ++i)
      total += bce_from_logit(t.z.back()(i, 0), labels[static_cast<std::size_t>(start + i)]);
  }
  return total / static_cast<double>(features.rows());
}

TrainResult train(MlpModel model, const RowMatrixXf& features, std::span<const double> labels,
                  const TrainConfig& cfg, const RowMatrixXf* holdout, std::span<const double> holdout_labels) {
  cfg.validate();
  check_model(model);
  if (features.rows() != static_cast<Eigen::Index>(labels.size()))
    fail(ErrorCode::Dimension, "feature rows and labels differ in count");
  if (features.cols() != model.input_dim()) fail(ErrorCode::Dimension, "feature length does not match model input");
  std::size_t positives = 0, negatives = 0;
  for (double y : labels) {
    if (y == 1.0)
      ++positives;
    else if (y == 0.0)
      ++negatives;
    else
      fail(ErrorCode::InvalidArgument, "labels must be 0 or 1");
  }
  if (positives == 0 || negatives == 0) fail(ErrorCode::EmptyClass, "training needs samples of both classes");
  if (!features.allFinite()) fail(ErrorCode::InvalidArgument, "non-finite feature values");
  if (holdout && holdout->rows() != static_cast<Eigen::Index>(holdout_labels.size()))
    fail(ErrorCode::Dimension, "holdout rows and labels differ in count");

  TrainResult result;
  result.model = model;
  if (cfg.epochs == 0) return result;

  const std::size_t L = model.layers.size();
  std::vector<Eigen::MatrixXd> mw(L), vw(L);
  std::vector<Eigen::VectorXd> mb(L), vb(L);
  for (std::size_t k = 0; k < L; ++k) {
    mw[k] = Eigen::MatrixXd::Zero(model.layers[k].weights.rows(), model.layers[k].weights.cols());
    vw[k] = mw[k];
    mb[k] = Eigen::VectorXd::Zero(model.layers[k].bias.size());
    vb[k] = mb[k];
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  long step = 0;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> rows(order.data() + start, end - start);
      const Eigen::MatrixXd x = gather_rows(features, rows);
      const BatchTrace t = forward_batch(model, x);
      const double inv_n = 1.0 / static_cast<double>(rows.size());

      Eigen::MatrixXd delta(static_cast<Eigen::Index>(rows.size()), 1);
      for (std::size_t i = 0; i < rows.size(); ++i)
        delta(static_cast<Eigen::Index>(i), 0) =
            (logistic(t.z.back()(static_cast<Eigen::Index>(i), 0)) - labels[rows[i]]) * inv_n;

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t k = L; k-- > 0;) {
        const Eigen::MatrixXd a_prev = k == 0 ? x : Eigen::MatrixXd(t.z[k - 1].cwiseMax(0.0));
        const Eigen::MatrixXd gw = delta.transpose() * a_prev;
        const Eigen::VectorXd gb = delta.colwise().sum().transpose();
        if (k > 0) {
          Eigen::MatrixXd back = delta * model.layers[k].weights;
          delta = back.array() * (t.z[k - 1].array() > 0.0).cast<double>();
        }
        mw[k] = cfg.beta1 * mw[k] + (1.0 - cfg.beta1) * gw;
        vw[k] = cfg.beta2 * vw[k] + (1.0 - cfg.beta2) * gw.cwiseProduct(gw);
        mb[k] = cfg.beta1 * mb[k] + (1.0 - cfg.beta1) * gb;
        vb[k] = cfg.beta2 * vb[k] + (1.0 - cfg.beta2) * gb.cwiseProduct(gb);
        model.layers[k].weights.array() -=
            cfg.learning_rate * (mw[k].array() / c1) / ((vw[k].array() / c2).sqrt() + cfg.epsilon);
        model.layers[k].bias.array() -=
            cfg.learning_rate * (mb[k].array() / c1) / ((vb[k].array() / c2).sqrt() + cfg.epsilon);
      }
    }

    const double train_loss = mean_loss(model, features, labels);
    result.loss_history.push_back(train_loss);
    double monitored = train_loss;
    if (holdout && holdout->rows() > 0) {
      monitored = mean_loss(model, *holdout, holdout_labels);
      result.holdout_history.push_back(monitored);
    }
    if (monitored < best) {
      best = monitored;
      since_best = 0;
      result.model = model;
      result.best_epoch = epoch;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

FloatMlp::FloatMlp(const MlpModel& model) : input_dim_(model.input_dim()) {
  check_model(model);
  for (const Layer& l : model.layers) {
    FloatLayer f;
    f.weights_t = l.weights.transpose().cast<float>();
    f.bias = l.bias.transpose().cast<float>();
    f.activation = l.activation;
    layers_.push_back(std::move(f));
  }
}

void FloatMlp::score(const RowMatrixXf& x, std::span<double> out) const {
  if (x.cols() != input_dim_) fail(ErrorCode::Dimension, "feature length does not match model input");
  RowMatrixXf a = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    RowMatrixXf z = a * layers_[k].weights_t;
    z.rowwise() += layers_[k].bias;
    if (layers_[k].activation == Activation::Relu) z = z.cwiseMax(0.0f);
    a = std::move(z);
  }
  const float lo = std::nextafter(0.0f, 1.0f);
  const float hi = std::nextafter(1.0f, 0.0f);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const float z = a(i, 0);
    const float s = z >= 0.0f ? 1.0f / (1.0f + std::exp(-z)) : std::exp(z) / (1.0f + std::exp(z));
    out[static_cast<std::size_t>(i)] = std::clamp(s, lo, hi);
  }
}

std::string serialize_model(const MlpModel& model) {
  check_model(model);
  json header;
  header["layer_dims"] = model.layer_dims();
  json acts = json::array();
  for (const Layer& l : model.layers) acts.push_back(activation_name(l.activation));
  header["activations"] = acts;
  header["feature_config"] = json::parse(model.feature_config.to_json());
  const std::string text = header.dump();

  std::string out(kMagic, kMagicLen);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const Layer& l : model.layers) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) put_f32(out, l.weights(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put_f32(out, l.bias(r));
  }
  return out;
}

MlpModel deserialize_model(const std::string& bytes) {
  if (bytes.size() < kMagicLen + 4 || bytes.compare(0, kMagicLen, kMagic, kMagicLen) != 0)
    fail(ErrorCode::MalformedHeader, "not a HAHOG-MLP model file");
  const std::size_t header_len = get_u32(bytes, kMagicLen);
  std::size_t pos = kMagicLen + 4;
  if (bytes.size() < pos + header_len) fail(ErrorCode::TruncatedPayload, "model header is truncated");

  MlpModel m;
  std::vector<int> dims;
  std::vector<std::string> acts;
  try {
    json header = json::parse(bytes.substr(pos, header_len));
    dims = header.at("layer_dims").get<std::vector<int>>();
    acts = header.at("activations").get<std::vector<std::string>>();
    m.feature_config = FeatureConfig::from_json(header.at("feature_config").dump());
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad model header: ") + e.what());
  }
  pos += header_len;
  if (dims.size() < 2 || acts.size() != dims.size() - 1) fail(ErrorCode::Format, "model header shape mismatch");
  std::size_t expected = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    if (dims[l] < 1 || dims[l + 1] < 1) fail(ErrorCode::Format, "model header shape mismatch");
    expected += static_cast<std::size_t>(dims[l + 1]) * (static_cast<std::size_t>(dims[l]) + 1);
  }
  if (bytes.size() - pos < 4 * expected) fail(ErrorCode::TruncatedPayload, "model weights are truncated");
  if (bytes.size() - pos > 4 * expected) fail(ErrorCode::Format, "trailing bytes after model weights");

  auto next = [&] {
    const float f = std::bit_cast<float>(get_u32(bytes, pos));
    pos += 4;
    return static_cast<double>(f);
  };
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    layer.activation = activation_from_name(acts[l]);
    layer.weights.resize(dims[l + 1], dims[l]);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = next();
    layer.bias.resize(dims[l + 1]);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = next();
    m.layers.push_back(std::move(layer));
  }
  check_model(m);
  if (m.input_dim() != static_cast<int>(m.feature_config.length()))
    fail(ErrorCode::Format, "model input does not match its feature configuration");
  return m;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

MlpModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

std::string model_hash(const MlpModel& model) { return fnv1a_hex(serialize_model(model)); }

}  // namespace hahog
