#pragma once

#include "cyclegcn/model.hpp"
#include "cyclegcn/preprocess.hpp"
#include "cyclegcn/split.hpp"

#include <functional>
#include <optional>

namespace cyclegcn {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  int max_epochs = 2500;
  double dropout_p = 0.4;
  int patience = 100;
  double min_delta = 1e-6;
  int eval_interval = 50;
  bool early_stopping = true;
  double batch_norm_momentum = 0.1;
  std::uint64_t seed = 42;
  SplitRatios split_ratios = kDefaultSplitRatios;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Regression error summary. MAPE is in percent and only averages targets
/// >= 1; it is empty when every target is zero.
struct Metrics {
  double rmse = 0.0;
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> mape;
  std::size_t excluded_zero_targets = 0;
  std::size_t count = 0;
};

Metrics compute_metrics(const Eigen::VectorXd& truth, const Eigen::VectorXd& predicted);

struct MetricSnapshot {
  int epoch = 0;
  Metrics train;
  Metrics validation;
};

struct TrainedModel {
  ModelConfig config;
  Parameters parameters;
  TargetTransform transform;
  std::uint64_t seed = 0;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int stopped_epoch = 0;
  int best_epoch = 0;
  std::vector<MetricSnapshot> snapshots;
};

/// Patience bookkeeping. The patience counter resets only on an improvement
/// larger than min_delta; the best epoch tracks the plain minimum.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_delta);

  /// Records the loss of the next epoch; returns true when it is the best so
  /// far.
  bool observe(double validation_loss);
  bool should_stop() const { return stale_epochs_ >= patience_; }
  int epochs_seen() const { return epochs_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  double min_delta_;
  int epochs_ = 0;
  int stale_epochs_ = 0;
  int best_epoch_ = 0;
  double best_loss_;
  double reference_loss_;
};

/// Optional override of the measured validation loss, called once per epoch.
using ValidationLossHook = std::function<double(int epoch, double measured)>;

/// Full-batch training on the labelled training nodes `split.train`, with
/// early stopping monitored on `split.validation`. Loss is the MSE on the
/// transformed target; snapshots report metrics in AADB units.
TrainedModel train(const NormalizedAdjacency& adjacency, const Eigen::MatrixXd& features,
                   const TargetVector& targets, const SplitAssignment& split,
                   const ModelConfig& config, const TrainConfig& train_config,
                   const ValidationLossHook& hook = {});

/// Eval-mode predictions on the transformed scale.
Eigen::VectorXd predict_transformed(const TrainedModel& model, const NormalizedAdjacency& adjacency,
                                    const Eigen::MatrixXd& features);
/// Eval-mode predictions in AADB units.
Eigen::VectorXd predict_aadb(const TrainedModel& model, const NormalizedAdjacency& adjacency,
                             const Eigen::MatrixXd& features);

/// Metrics over `mask` in AADB units.
Metrics evaluate(const TrainedModel& model, const NormalizedAdjacency& adjacency,
                 const Eigen::MatrixXd& features, const TargetVector& targets,
                 std::span<const Index> mask);

/// Gathers entries of `values` at `rows`.
Eigen::VectorXd gather(const Eigen::VectorXd& values, std::span<const Index> rows);
Eigen::VectorXd aadb_at(const TargetVector& targets, std::span<const Index> rows);

}  // namespace cyclegcn
