#pragma once

#include "cyclegcn/graph.hpp"
#include "cyclegcn/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cyclegcn {

// ---------------------------------------------------------------------------
// Layer specifications

/// Linear graph convolution adj * H * W + b. The activation is a separate
/// Relu layer.
struct GcnConv {
  Index in_dim;
  Index out_dim;
};
struct Relu {};
struct BatchNorm {
  Index dim;
};
struct Dropout {
  double p;
};
struct FullyConnected {
  Index in_dim;
  Index out_dim;
};

using LayerSpec = std::variant<GcnConv, Relu, BatchNorm, Dropout, FullyConnected>;

std::string describe(const LayerSpec& layer);

struct ModelConfig {
  /// "A".."J" for catalog entries, "custom" otherwise.
  std::string label = "custom";
  std::vector<LayerSpec> layers;
  /// Linear map from the last hidden width to one output, no activation.
  FullyConnected output_head{1, 1};

  /// Hidden layers followed by the output head.
  std::vector<LayerSpec> all_layers() const;
  Index feature_dim() const;
  /// Throws ConfigError if dimensions do not chain or a dropout probability
  /// is outside [0, 1).
  void validate() const;
};

/// Layer stack for configurations A..J (hidden widths fixed per label).
/// Every convolution and hidden fully connected layer is followed by a ReLU;
/// BatchNorm and Dropout rows follow in the listed order.
ModelConfig config_catalog(std::string_view label, Index feature_dim, double dropout_p = 0.4);
std::span<const std::string_view> catalog_labels();

/// Replaces every Dropout probability.
void set_dropout(ModelConfig& config, double p);

// ---------------------------------------------------------------------------
// Parameters

/// One entry per layer of ModelConfig::all_layers(). Only the members used
/// by the layer kind are non-empty.
struct LayerParameters {
  Eigen::MatrixXd weight;  // in_dim x out_dim
  Eigen::RowVectorXd bias;
  Eigen::RowVectorXd gamma;
  Eigen::RowVectorXd beta;
  Eigen::RowVectorXd running_mean;
  Eigen::RowVectorXd running_var;
};

struct Parameters {
  std::vector<LayerParameters> layers;
};

/// Glorot-uniform weights, zero biases, gamma = 1, beta = 0, running mean 0,
/// running variance 1.
Parameters initialize_parameters(const ModelConfig& config, std::uint64_t seed);

/// Learnable scalars: weights, biases, gamma and beta.
std::size_t parameter_count(const Parameters& params);

/// Zero-valued parameters with the same learnable shapes (running statistics
/// left empty); the gradient container.
Parameters zeros_like(const Parameters& params);

// ---------------------------------------------------------------------------
// Forward / backward

enum class Mode { train, eval };

inline constexpr double kBatchNormEpsilon = 1e-5;

struct LayerCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd propagated;  // adj * input, graph convolutions only
  Eigen::MatrixXd normalized;  // x_hat, batch norm only
  Eigen::RowVectorXd inv_std;
  Eigen::RowVectorXd batch_mean;
  Eigen::RowVectorXd batch_var;
  Eigen::MatrixXd mask;  // dropout: 0 or 1/(1-p); empty when inactive
};

struct ForwardCache {
  Mode mode = Mode::eval;
  std::vector<LayerCache> layers;
};

struct ForwardResult {
  Eigen::VectorXd predictions;
  ForwardCache cache;
};

/// Full-graph forward pass. In train mode BatchNorm uses whole-graph batch
/// statistics and Dropout draws masks from `rng`, unless `replay` supplies
/// the masks of an earlier pass. Eval mode is deterministic.
ForwardResult forward(const ModelConfig& config, const Parameters& params,
                      const Eigen::MatrixXd& features, const NormalizedAdjacency& adjacency,
                      Mode mode, Rng* rng = nullptr, const ForwardCache* replay = nullptr);

/// Gradients of the loss with respect to every learnable parameter, given
/// d(loss)/d(predictions). The adjacency must be symmetric.
Parameters backward(const ModelConfig& config, const Parameters& params, const ForwardCache& cache,
                    const NormalizedAdjacency& adjacency, const Eigen::VectorXd& loss_grad);

/// Blends the batch statistics recorded in a train-mode cache into the
/// running statistics: r <- (1 - momentum) r + momentum * batch. The
/// variance uses the unbiased estimate.
void update_running_statistics(const ModelConfig& config, Parameters& params,
                               const ForwardCache& cache, double momentum);

// ---------------------------------------------------------------------------
// Loss

/// Mean squared residual over `mask`. Throws std::invalid_argument when the
/// mask is empty.
double masked_mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets,
                  std::span<const Index> mask);
Eigen::VectorXd masked_mse_gradient(const Eigen::VectorXd& predictions,
                                    const Eigen::VectorXd& targets, std::span<const Index> mask);

// ---------------------------------------------------------------------------
// Adam

struct AdamSettings {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  Parameters first_moment;
  Parameters second_moment;
};

AdamState make_adam_state(const Parameters& params);

/// One bias-corrected Adam update. Weight decay is coupled (added to the
/// gradient) and applies to weight matrices only. Throws std::runtime_error
/// naming the layer if a gradient is not finite.
void adam_step(const ModelConfig& config, Parameters& params, const Parameters& grads,
               AdamState& state, const AdamSettings& settings);

}  // namespace cyclegcn
