#pragma once

#include "cyclegcn/model.hpp"
#include "helpers.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace testing {

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t passed = 0;
  double worst = 0.0;
  /// Share of all learnable scalars estimated to pass: per-tensor pass
  /// rates weighted by tensor size. Equals passed / checked when every
  /// entry is probed.
  double weighted_pass = 0.0;
  std::size_t total_parameters = 0;

  double pass_rate() const { return checked == 0 ? 0.0 : static_cast<double>(passed) / checked; }
};

/// |a - n| / max(|a|, |n|); pairs where both are below `floor` count as
/// agreeing.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < floor) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

/// Layers start..end of a network as a network of their own, with the
/// dropout masks of the matching slice of a train-mode cache.
struct NetworkTail {
  cyclegcn::ModelConfig config;
  cyclegcn::Parameters params;
  cyclegcn::ForwardCache replay;
};

inline NetworkTail make_tail(const cyclegcn::ModelConfig& config, const cyclegcn::Parameters& params,
                             const cyclegcn::ForwardCache& cache, std::size_t start) {
  NetworkTail tail;
  tail.config.output_head = config.output_head;
  tail.config.layers.assign(config.layers.begin() + static_cast<std::ptrdiff_t>(start), config.layers.end());
  tail.params.layers.assign(params.layers.begin() + static_cast<std::ptrdiff_t>(start), params.layers.end());
  tail.replay.mode = cache.mode;
  tail.replay.layers.assign(cache.layers.begin() + static_cast<std::ptrdiff_t>(start), cache.layers.end());
  return tail;
}

/// Central differences of the masked MSE with dropout masks frozen from one
/// train-mode pass. At most `per_tensor` entries of each parameter tensor are
/// probed (all of them when the tensor is smaller).
///
/// A perturbed entry of layer l only changes one output column of that
/// layer, so the loss is re-evaluated from layer l + 1 on, starting from the
/// cached output plus the column change. `full_forward` re-runs the whole
/// network instead; both give the same numbers up to rounding.
inline GradCheckResult check_gradients(const cyclegcn::ModelConfig& config,
                                       const cyclegcn::Parameters& params,
                                       const Eigen::MatrixXd& x,
                                       const cyclegcn::NormalizedAdjacency& adj,
                                       const Eigen::VectorXd& targets,
                                       const std::vector<Index>& mask, cyclegcn::Rng& rng,
                                       std::size_t per_tensor, double step = 1e-5,
                                       double tolerance = 1e-4, bool full_forward = false) {
  using namespace cyclegcn;
  const ForwardResult base = forward(config, params, x, adj, Mode::train, &rng);
  const Parameters grads = backward(config, params, base.cache, adj,
                                    masked_mse_gradient(base.predictions, targets, mask));
  const auto layers = config.all_layers();
  const std::size_t head = layers.size() - 1;

  // Output of layer l in the base pass, when it can be read off the cache.
  const auto cached_output = [&](std::size_t l) -> std::optional<Eigen::MatrixXd> {
    if (l == head) return Eigen::MatrixXd(base.predictions);
    const LayerCache& c = base.cache.layers[l];
    if (std::holds_alternative<BatchNorm>(layers[l])) {
      Eigen::MatrixXd out = c.normalized;
      out.array().rowwise() *= params.layers[l].gamma.array();
      out.rowwise() += params.layers[l].beta;
      return out;
    }
    const auto& next = layers[l + 1];
    if (std::holds_alternative<Relu>(next) || std::holds_alternative<FullyConnected>(next)) {
      return base.cache.layers[l + 1].input;
    }
    return std::nullopt;
  };
  // Input of layer l whose columns the weight rows multiply.
  const auto layer_input = [&](std::size_t l) -> const Eigen::MatrixXd& {
    const LayerCache& c = base.cache.layers[l];
    return std::holds_alternative<GcnConv>(layers[l]) ? c.propagated : c.input;
  };

  GradCheckResult result;
  double weighted = 0.0;
  Parameters probe = params;
  const auto visit_tensor = [&](auto member, int kind) {
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      auto& tensor = probe.layers[l].*member;
      const auto& analytic = grads.layers[l].*member;
      const auto size = static_cast<std::size_t>(tensor.size());
      if (size == 0) continue;
      result.total_parameters += size;
      std::vector<std::size_t> picks(size);
      for (std::size_t i = 0; i < size; ++i) picks[i] = i;
      if (size > per_tensor) {
        rng.shuffle(picks);
        picks.resize(per_tensor);
      }

      std::optional<Eigen::MatrixXd> out = full_forward ? std::nullopt : cached_output(l);
      std::optional<NetworkTail> tail;
      if (out && l != head) tail = make_tail(config, params, base.cache, l + 1);
      const auto loss_with = [&](Index k, double delta) {
        if (!out) {
          const double original = tensor.data()[k];
          tensor.data()[k] = original + delta;
          const double loss =
              masked_mse(forward(config, probe, x, adj, Mode::train, nullptr, &base.cache).predictions,
                         targets, mask);
          tensor.data()[k] = original;
          return loss;
        }
        // Column j of the layer output moves by delta times `direction`.
        Eigen::MatrixXd changed = *out;
        Index j = k;
        if (kind == 0) {  // weight (i, j), column-major storage
          const Index rows = tensor.rows();
          j = k / rows;
          changed.col(j) += delta * layer_input(l).col(k % rows);
        } else if (kind == 1 || kind == 3) {  // bias, beta
          changed.col(j).array() += delta;
        } else {  // gamma
          changed.col(j) += delta * base.cache.layers[l].normalized.col(j);
        }
        if (l == head) return masked_mse(changed.col(0), targets, mask);
        return masked_mse(
            forward(tail->config, tail->params, changed, adj, Mode::train, nullptr, &tail->replay).predictions,
            targets, mask);
      };

      std::size_t tensor_passed = 0;
      for (const std::size_t i : picks) {
        const auto k = static_cast<Index>(i);
        const double numeric = (loss_with(k, step) - loss_with(k, -step)) / (2.0 * step);
        const double err = relative_error(analytic.data()[k], numeric);
        ++result.checked;
        if (err <= tolerance) {
          ++result.passed;
          ++tensor_passed;
        }
        result.worst = std::max(result.worst, err);
      }
      weighted += static_cast<double>(size) * static_cast<double>(tensor_passed) /
                  static_cast<double>(picks.size());
    }
  };
  visit_tensor(&LayerParameters::weight, 0);
  visit_tensor(&LayerParameters::bias, 1);
  visit_tensor(&LayerParameters::gamma, 2);
  visit_tensor(&LayerParameters::beta, 3);
  result.weighted_pass =
      result.total_parameters == 0 ? 0.0 : weighted / static_cast<double>(result.total_parameters);
  return result;
}

/// Random connected-ish test problem on `n` nodes.
struct GradProblem {
  cyclegcn::RoadGraph graph;
  cyclegcn::NormalizedAdjacency adj;
  Eigen::MatrixXd x;
  Eigen::VectorXd targets;
  std::vector<Index> mask;
};

inline GradProblem make_grad_problem(Index n, Index features, cyclegcn::Rng& rng) {
  GradProblem p;
  p.graph = random_graph(n, 0.2, rng);
  p.adj = cyclegcn::normalize(p.graph);
  p.x = random_matrix(n, features, rng);
  p.targets = random_vector(n, rng);
  for (Index i = 0; i < n; ++i) {
    if (rng.bernoulli(0.7)) p.mask.push_back(i);
  }
  if (p.mask.empty()) p.mask.push_back(0);
  return p;
}

}  // namespace testing
