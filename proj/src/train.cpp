#include "cyclegcn/train.hpp"

#include "cyclegcn/errors.hpp"

#include <cmath>
#include <limits>

namespace cyclegcn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (min_delta < 0.0) throw ConfigError("min_delta must be non-negative");
  if (eval_interval < 1) throw ConfigError("eval_interval must be at least 1");
  if (!(batch_norm_momentum >= 0.0 && batch_norm_momentum <= 1.0)) {
    throw ConfigError("batch_norm_momentum must lie in [0, 1]");
  }
  double sum = 0.0;
  for (const double r : split_ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

Metrics compute_metrics(const Eigen::VectorXd& truth, const Eigen::VectorXd& predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("metric inputs differ in length");
  if (truth.size() == 0) throw std::invalid_argument("metrics need at least one value");
  Metrics m;
  m.count = static_cast<std::size_t>(truth.size());
  double squared = 0.0;
  double absolute = 0.0;
  double percentage = 0.0;
  std::size_t percentage_count = 0;
  for (Index i = 0; i < truth.size(); ++i) {
    const double r = truth(i) - predicted(i);
    squared += r * r;
    absolute += std::abs(r);
    if (truth(i) >= 1.0) {
      percentage += std::abs(r) / truth(i);
      ++percentage_count;
    } else {
      ++m.excluded_zero_targets;
    }
  }
  const double n = static_cast<double>(truth.size());
  m.mse = squared / n;
  m.rmse = std::sqrt(m.mse);
  m.mae = absolute / n;
  if (percentage_count > 0) m.mape = 100.0 * percentage / static_cast<double>(percentage_count);
  return m;
}

EarlyStopping::EarlyStopping(int patience, double min_delta)
    : patience_(patience),
      min_delta_(min_delta),
      best_loss_(std::numeric_limits<double>::infinity()),
      reference_loss_(std::numeric_limits<double>::infinity()) {}

bool EarlyStopping::observe(double validation_loss) {
  ++epochs_;
  if (validation_loss < reference_loss_ - min_delta_ || !std::isfinite(reference_loss_)) {
    reference_loss_ = validation_loss;
    stale_epochs_ = 0;
  } else {
    ++stale_epochs_;
  }
  if (validation_loss < best_loss_) {
    best_loss_ = validation_loss;
    best_epoch_ = epochs_;
    return true;
  }
  return false;
}

Eigen::VectorXd gather(const Eigen::VectorXd& values, std::span<const Index> rows) {
  Eigen::VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Index>(k)) = values(rows[k]);
  return out;
}

Eigen::VectorXd aadb_at(const TargetVector& targets, std::span<const Index> rows) {
  Eigen::VectorXd out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<std::size_t>(rows[k]);
    if (!targets.labelled[r]) throw DataError("node " + std::to_string(r) + " has no target");
    out(static_cast<Index>(k)) = static_cast<double>(targets.aadb[r]);
  }
  return out;
}

namespace {

Metrics metrics_on(const Eigen::VectorXd& predicted_aadb, const TargetVector& targets,
                   std::span<const Index> mask) {
  return compute_metrics(aadb_at(targets, mask), gather(predicted_aadb, mask));
}

}  // namespace

TrainedModel train(const NormalizedAdjacency& adjacency, const Eigen::MatrixXd& features,
                   const TargetVector& targets, const SplitAssignment& split,
                   const ModelConfig& config, const TrainConfig& train_config,
                   const ValidationLossHook& hook) {
  train_config.validate();
  config.validate();
  if (split.train.empty()) throw DataError("training set has no labelled nodes");
  if (split.validation.empty()) throw DataError("validation set is empty");
  for (const auto* set : {&split.train, &split.validation}) {
    for (const Index i : *set) {
      if (!targets.labelled[static_cast<std::size_t>(i)]) {
        throw DataError("node " + std::to_string(i) + " in the split has no target");
      }
    }
  }

  TrainedModel model;
  model.config = config;
  model.transform = targets.transform;
  model.seed = train_config.seed;
  model.parameters = initialize_parameters(config, derive_seed(train_config.seed, 0));
  Rng dropout_rng(derive_seed(train_config.seed, 1));

  AdamSettings adam;
  adam.learning_rate = train_config.learning_rate;
  adam.weight_decay = train_config.weight_decay;
  AdamState state = make_adam_state(model.parameters);
  EarlyStopping stopper(train_config.patience, train_config.min_delta);
  Parameters best = model.parameters;

  const auto snapshot = [&](int epoch) {
    const Eigen::VectorXd predicted = predict_aadb(model, adjacency, features);
    model.snapshots.push_back(MetricSnapshot{epoch, metrics_on(predicted, targets, split.train),
                                             metrics_on(predicted, targets, split.validation)});
  };

  int epoch = 0;
  while (epoch < train_config.max_epochs) {
    ++epoch;
    const ForwardResult pass =
        forward(config, model.parameters, features, adjacency, Mode::train, &dropout_rng);
    const double loss = masked_mse(pass.predictions, targets.transformed, split.train);
    const Parameters grads =
        backward(config, model.parameters, pass.cache, adjacency,
                 masked_mse_gradient(pass.predictions, targets.transformed, split.train));
    update_running_statistics(config, model.parameters, pass.cache,
                              train_config.batch_norm_momentum);
    adam_step(config, model.parameters, grads, state, adam);

    const Eigen::VectorXd eval_predictions = predict_transformed(model, adjacency, features);
    double validation = masked_mse(eval_predictions, targets.transformed, split.validation);
    if (hook) validation = hook(epoch, validation);
    model.train_loss.push_back(loss);
    model.validation_loss.push_back(validation);

    if (stopper.observe(validation)) best = model.parameters;
    if (epoch % train_config.eval_interval == 0) snapshot(epoch);
    if (train_config.early_stopping && stopper.should_stop()) break;
  }
  model.stopped_epoch = epoch;
  if (train_config.early_stopping) {
    model.parameters = std::move(best);
    model.best_epoch = stopper.best_epoch();
  } else {
    model.best_epoch = epoch;
  }
  // The closing snapshot reflects the returned (possibly restored) parameters.
  if (!model.snapshots.empty() && model.snapshots.back().epoch == epoch) model.snapshots.pop_back();
  snapshot(epoch);
  return model;
}

Eigen::VectorXd predict_transformed(const TrainedModel& model, const NormalizedAdjacency& adjacency,
                                    const Eigen::MatrixXd& features) {
  return forward(model.config, model.parameters, features, adjacency, Mode::eval).predictions;
}

Eigen::VectorXd predict_aadb(const TrainedModel& model, const NormalizedAdjacency& adjacency,
                             const Eigen::MatrixXd& features) {
  return inverse_transform_predictions(predict_transformed(model, adjacency, features),
                                       model.transform);
}

Metrics evaluate(const TrainedModel& model, const NormalizedAdjacency& adjacency,
                 const Eigen::MatrixXd& features, const TargetVector& targets,
                 std::span<const Index> mask) {
  if (mask.empty()) throw std::invalid_argument("evaluation mask is empty");
  return metrics_on(predict_aadb(model, adjacency, features), targets, mask);
}

}  // namespace cyclegcn
