#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "core/features.hpp"

namespace hahog {

enum class Activation : int { Relu = 0, Logistic = 1 };

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Layer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::Relu;
};

/// Multilayer perceptron whose last layer is a single logistic unit, so the
/// output score lies in (0, 1).
class MlpModel {
 public:
  MlpModel() = default;

  /// dims = {input, hidden..., 1}. Hidden layers use the rectifier, the output the
  /// logistic function. Weights are uniform in +-sqrt(6 / fan_in), biases zero.
  static MlpModel create(const std::vector<int>& dims, std::uint64_t seed, const FeatureConfig& features = {});

  std::vector<int> layer_dims() const;
  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weights.cols()); }
  std::size_t parameter_count() const;

  /// Score alpha for one feature vector (double precision).
  double forward(std::span<const double> x) const;

  std::vector<Layer> layers;
  FeatureConfig feature_config;
};

/// Mean binary cross-entropy on one sample, computed from the pre-activation.
double sample_loss(const MlpModel& model, std::span<const double> x, double y);

struct Gradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;
};

/// Analytic gradient of sample_loss by back-propagation.
Gradient backprop(const MlpModel& model, std::span<const double> x, double y);

/// Largest relative error between backprop and central differences over all parameters.
double grad_check(const MlpModel& model, std::span<const double> x, double y, double step = 1e-5);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 60;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  int patience = 8;

  void validate() const;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_history;     // mean training loss after each epoch
  std::vector<double> holdout_history;  // empty without a holdout set
  int best_epoch = -1;
};

/// Mini-batch training with adaptive moment estimates. Rows of `features` are samples.
/// The model with the best monitored loss (holdout if given, else training) is returned.
TrainResult train(MlpModel model, const RowMatrixXf& features, std::span<const double> labels,
                  const TrainConfig& cfg, const RowMatrixXf* holdout = nullptr,
                  std::span<const double> holdout_labels = {});

/// Mean loss over a labelled set.
double mean_loss(const MlpModel& model, const RowMatrixXf& features, std::span<const double> labels);

/// Single-precision copy of a model for batched scoring.
class FloatMlp {
 public:
  explicit FloatMlp(const MlpModel& model);
  /// Scores each row of `x`.
  void score(const RowMatrixXf& x, std::span<double> out) const;
  int input_dim() const { return input_dim_; }

 private:
  struct FloatLayer {
    RowMatrixXf weights_t;  // in x out
    Eigen::RowVectorXf bias;
    Activation activation;
  };
  std::vector<FloatLayer> layers_;
  int input_dim_ = 0;
};

// File: "HAHOG-MLP\x01", u32 LE header length, JSON header, then per layer the
// row-major weights and the biases as little-endian float32.
std::string serialize_model(const MlpModel& model);
MlpModel deserialize_model(const std::string& bytes);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

/// FNV-1a over the serialized bytes, as 16 hex digits.
std::string model_hash(const MlpModel& model);

}  // namespace hahog
