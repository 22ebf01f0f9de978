#include "cyclegcn/model.hpp"

#include "cyclegcn/errors.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace cyclegcn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::array<std::string_view, 10> kLabels{"A", "B", "C", "D", "E",
                                                   "F", "G", "H", "I", "J"};

enum class Row { conv, batch_norm, dropout, dense };

struct CatalogRow {
  Row kind;
  std::array<int, 10> value;  // width for conv/dense rows, 0/1 presence otherwise
};

// Columns A..J.
constexpr std::array<CatalogRow, 15> kCatalog{{
    {Row::conv, {32, 32, 32, 32, 32, 32, 32, 32, 64, 64}},
    {Row::conv, {64, 64, 64, 64, 64, 64, 64, 64, 128, 128}},
    {Row::batch_norm, {0, 1, 1, 1, 1, 1, 1, 1, 1, 1}},
    {Row::dropout, {0, 1, 1, 1, 1, 1, 1, 1, 1, 1}},
    {Row::conv, {0, 0, 0, 128, 128, 0, 128, 128, 256, 256}},
    {Row::batch_norm, {0, 0, 0, 0, 1, 0, 1, 1, 1, 1}},
    {Row::dropout, {0, 0, 0, 0, 1, 0, 1, 1, 1, 1}},
    {Row::conv, {0, 0, 0, 0, 0, 256, 256, 256, 0, 512}},
    {Row::batch_norm, {0, 0, 0, 0, 0, 1, 0, 1, 0, 1}},
    {Row::dropout, {0, 0, 0, 0, 0, 1, 0, 1, 0, 1}},
    {Row::dense, {0, 0, 64, 128, 128, 256, 256, 256, 256, 512}},
    {Row::dropout, {0, 0, 1, 1, 1, 1, 1, 1, 1, 1}},
    {Row::dense, {64, 64, 64, 64, 64, 128, 128, 128, 128, 128}},
    {Row::dropout, {0, 0, 0, 0, 0, 1, 1, 1, 1, 1}},
    {Row::dense, {0, 0, 0, 0, 0, 64, 64, 64, 64, 64}},
}};

Eigen::MatrixXd sample_mask(Index rows, Index cols, double p, Rng& rng) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) mask(r, c) = rng.uniform() < p ? 0.0 : keep_scale;
  }
  return mask;
}

void require_finite(const auto& m, std::size_t layer, const std::string& what,
                    const ModelConfig& config) {
  if (m.size() > 0 && !m.allFinite()) {
    throw std::runtime_error("non-finite " + what + " gradient in layer " + std::to_string(layer) +
                             " (" + describe(config.all_layers()[layer]) + ")");
  }
}

}  // namespace

std::string describe(const LayerSpec& layer) {
  return std::visit(
      overloaded{
          [](const GcnConv& l) {
            return "GCNConv(" + std::to_string(l.in_dim) + "->" + std::to_string(l.out_dim) + ")";
          },
          [](const Relu&) { return std::string("ReLU"); },
          [](const BatchNorm& l) { return "BatchNorm(" + std::to_string(l.dim) + ")"; },
          [](const Dropout& l) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "Dropout(%g)", l.p);
            return std::string(buf);
          },
          [](const FullyConnected& l) {
            return "FC(" + std::to_string(l.in_dim) + "->" + std::to_string(l.out_dim) + ")";
          },
      },
      layer);
}

std::vector<LayerSpec> ModelConfig::all_layers() const {
  std::vector<LayerSpec> all = layers;
  all.emplace_back(output_head);
  return all;
}

Index ModelConfig::feature_dim() const {
  for (const auto& layer : layers) {
    if (const auto* conv = std::get_if<GcnConv>(&layer)) return conv->in_dim;
    if (const auto* fc = std::get_if<FullyConnected>(&layer)) return fc->in_dim;
    if (const auto* bn = std::get_if<BatchNorm>(&layer)) return bn->dim;
  }
  return output_head.in_dim;
}

void ModelConfig::validate() const {
  if (output_head.out_dim != 1) throw ConfigError("output head must have one unit");
  Index width = feature_dim();
  if (width <= 0) throw ConfigError("feature dimension must be positive");
  std::size_t index = 0;
  for (const auto& layer : all_layers()) {
    const auto fail = [&](const std::string& why) {
      throw ConfigError("layer " + std::to_string(index) + " " + describe(layer) + ": " + why);
    };
    std::visit(overloaded{
                   [&](const GcnConv& l) {
                     if (l.in_dim != width) fail("expects width " + std::to_string(width));
                     if (l.out_dim <= 0) fail("output width must be positive");
                     width = l.out_dim;
                   },
                   [&](const FullyConnected& l) {
                     if (l.in_dim != width) fail("expects width " + std::to_string(width));
                     if (l.out_dim <= 0) fail("output width must be positive");
                     width = l.out_dim;
                   },
                   [&](const BatchNorm& l) {
                     if (l.dim != width) fail("expects width " + std::to_string(width));
                   },
                   [&](const Dropout& l) {
                     if (!(l.p >= 0.0 && l.p < 1.0)) fail("probability must lie in [0, 1)");
                   },
                   [](const Relu&) {},
               },
               layer);
    ++index;
  }
}

std::span<const std::string_view> catalog_labels() { return kLabels; }

ModelConfig config_catalog(std::string_view label, Index feature_dim, double dropout_p) {
  std::size_t column = kLabels.size();
  for (std::size_t i = 0; i < kLabels.size(); ++i) {
    if (kLabels[i] == label) column = i;
  }
  if (column == kLabels.size()) {
    throw ConfigError("unknown GCN configuration '" + std::string(label) + "' (expected A..J)");
  }
  if (feature_dim <= 0) throw ConfigError("feature dimension must be positive");
  ModelConfig config;
  config.label = std::string(label);
  Index width = feature_dim;
  for (const auto& row : kCatalog) {
    const int value = row.value[column];
    if (value == 0) continue;
    switch (row.kind) {
      case Row::conv:
        config.layers.emplace_back(GcnConv{width, value});
        config.layers.emplace_back(Relu{});
        width = value;
        break;
      case Row::dense:
        config.layers.emplace_back(FullyConnected{width, value});
        config.layers.emplace_back(Relu{});
        width = value;
        break;
      case Row::batch_norm:
        config.layers.emplace_back(BatchNorm{width});
        break;
      case Row::dropout:
        config.layers.emplace_back(Dropout{dropout_p});
        break;
    }
  }
  config.output_head = FullyConnected{width, 1};
  config.validate();
  return config;
}

void set_dropout(ModelConfig& config, double p) {
  for (auto& layer : config.layers) {
    if (auto* d = std::get_if<Dropout>(&layer)) d->p = p;
  }
}

// ---------------------------------------------------------------------------

Parameters initialize_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Parameters params;
  for (const auto& layer : config.all_layers()) {
    LayerParameters p;
    const auto dense = [&](Index in, Index out) {
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      p.weight.resize(in, out);
      for (Index c = 0; c < out; ++c) {
        for (Index r = 0; r < in; ++r) p.weight(r, c) = rng.uniform(-limit, limit);
      }
      p.bias = Eigen::RowVectorXd::Zero(out);
    };
    std::visit(overloaded{
                   [&](const GcnConv& l) { dense(l.in_dim, l.out_dim); },
                   [&](const FullyConnected& l) { dense(l.in_dim, l.out_dim); },
                   [&](const BatchNorm& l) {
                     p.gamma = Eigen::RowVectorXd::Ones(l.dim);
                     p.beta = Eigen::RowVectorXd::Zero(l.dim);
                     p.running_mean = Eigen::RowVectorXd::Zero(l.dim);
                     p.running_var = Eigen::RowVectorXd::Ones(l.dim);
                   },
                   [](const auto&) {},
               },
               layer);
    params.layers.push_back(std::move(p));
  }
  return params;
}

std::size_t parameter_count(const Parameters& params) {
  std::size_t count = 0;
  for (const auto& p : params.layers) {
    count += static_cast<std::size_t>(p.weight.size() + p.bias.size() + p.gamma.size() +
                                      p.beta.size());
  }
  return count;
}

Parameters zeros_like(const Parameters& params) {
  Parameters zeros;
  zeros.layers.reserve(params.layers.size());
  for (const auto& p : params.layers) {
    LayerParameters z;
    z.weight = Eigen::MatrixXd::Zero(p.weight.rows(), p.weight.cols());
    z.bias = Eigen::RowVectorXd::Zero(p.bias.size());
    z.gamma = Eigen::RowVectorXd::Zero(p.gamma.size());
    z.beta = Eigen::RowVectorXd::Zero(p.beta.size());
    zeros.layers.push_back(std::move(z));
  }
  return zeros;
}

// ---------------------------------------------------------------------------

ForwardResult forward(const ModelConfig& config, const Parameters& params,
                      const Eigen::MatrixXd& features, const NormalizedAdjacency& adjacency,
                      Mode mode, Rng* rng, const ForwardCache* replay) {
  const auto layers = config.all_layers();
  if (params.layers.size() != layers.size()) {
    throw std::invalid_argument("parameters do not match the model configuration");
  }
  if (features.cols() != config.feature_dim()) {
    throw std::invalid_argument("feature matrix has " + std::to_string(features.cols()) +
                                " columns, model expects " + std::to_string(config.feature_dim()));
  }
  if (adjacency.matrix.rows() != features.rows() || adjacency.matrix.cols() != features.rows()) {
    throw std::invalid_argument("adjacency size does not match the number of nodes");
  }
  if (replay && replay->layers.size() != layers.size()) {
    throw std::invalid_argument("replay cache does not match the model configuration");
  }

  const Index n = features.rows();
  ForwardResult result;
  result.cache.mode = mode;
  result.cache.layers.resize(layers.size());
  Eigen::MatrixXd h = features;

  for (std::size_t l = 0; l < layers.size(); ++l) {
    LayerCache& cache = result.cache.layers[l];
    const LayerParameters& p = params.layers[l];
    std::visit(
        overloaded{
            [&](const GcnConv&) {
              cache.propagated = spmm(adjacency.matrix, h);
              h.noalias() = cache.propagated * p.weight;
              h.rowwise() += p.bias;
            },
            [&](const FullyConnected&) {
              cache.input = std::move(h);
              h.noalias() = cache.input * p.weight;
              h.rowwise() += p.bias;
            },
            [&](const Relu&) {
              cache.input = h;
              h = h.cwiseMax(0.0);
            },
            [&](const BatchNorm&) {
              if (mode == Mode::train) {
                cache.batch_mean = h.colwise().mean();
                h.rowwise() -= cache.batch_mean;
                cache.batch_var = h.array().square().colwise().mean().matrix();
                cache.inv_std = (cache.batch_var.array() + kBatchNormEpsilon).rsqrt().matrix();
                h.array().rowwise() *= cache.inv_std.array();
              } else {
                cache.inv_std = (p.running_var.array() + kBatchNormEpsilon).rsqrt().matrix();
                h.rowwise() -= p.running_mean;
                h.array().rowwise() *= cache.inv_std.array();
              }
              cache.normalized = h;
              h.array().rowwise() *= p.gamma.array();
              h.rowwise() += p.beta;
            },
            [&](const Dropout& d) {
              if (mode != Mode::train || d.p == 0.0) return;
              if (replay) {
                cache.mask = replay->layers[l].mask;
                if (cache.mask.rows() != h.rows() || cache.mask.cols() != h.cols()) {
                  throw std::invalid_argument("replayed dropout mask has the wrong shape");
                }
              } else {
                if (!rng) throw std::invalid_argument("train-mode dropout needs a random source");
                cache.mask = sample_mask(h.rows(), h.cols(), d.p, *rng);
              }
              h.array() *= cache.mask.array();
            },
        },
        layers[l]);
  }
  if (h.cols() != 1 || h.rows() != n) throw std::logic_error("model output is not one column");
  result.predictions = h.col(0);
  return result;
}

Parameters backward(const ModelConfig& config, const Parameters& params, const ForwardCache& cache,
                    const NormalizedAdjacency& adjacency, const Eigen::VectorXd& loss_grad) {
  const auto layers = config.all_layers();
  if (cache.layers.size() != layers.size() || params.layers.size() != layers.size()) {
    throw std::invalid_argument("forward cache does not match the model configuration");
  }
  Parameters grads = zeros_like(params);
  Eigen::MatrixXd g = loss_grad;

  for (std::size_t k = layers.size(); k-- > 0;) {
    const LayerCache& c = cache.layers[k];
    const LayerParameters& p = params.layers[k];
    LayerParameters& out = grads.layers[k];
    const bool need_input_grad = k > 0;
    std::visit(
        overloaded{
            [&](const GcnConv&) {
              if (c.propagated.rows() != g.rows()) {
                throw std::invalid_argument("forward cache lacks graph convolution activations");
              }
              out.weight.noalias() = c.propagated.transpose() * g;
              out.bias = g.colwise().sum();
              if (need_input_grad) {
                const Eigen::MatrixXd back = g * p.weight.transpose();
                g = spmm(adjacency.matrix, back);
              }
            },
            [&](const FullyConnected&) {
              if (c.input.rows() != g.rows()) {
                throw std::invalid_argument("forward cache lacks dense layer inputs");
              }
              out.weight.noalias() = c.input.transpose() * g;
              out.bias = g.colwise().sum();
              if (need_input_grad) g = g * p.weight.transpose();
            },
            [&](const Relu&) { g.array() *= (c.input.array() > 0.0).cast<double>(); },
            [&](const BatchNorm&) {
              out.gamma = (g.array() * c.normalized.array()).colwise().sum().matrix();
              out.beta = g.colwise().sum();
              Eigen::ArrayXXd dxhat = g.array().rowwise() * p.gamma.array();
              if (cache.mode == Mode::train) {
                const double n = static_cast<double>(g.rows());
                const Eigen::ArrayXXd xhat = c.normalized.array();
                const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum().matrix();
                const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat * xhat).colwise().sum().matrix();
                Eigen::ArrayXXd dx = n * dxhat;
                dx.rowwise() -= sum_dxhat.array();
                dx -= xhat.rowwise() * sum_dxhat_xhat.array();
                dx.rowwise() *= (c.inv_std.array() / n);
                g = dx.matrix();
              } else {
                dxhat.rowwise() *= c.inv_std.array();
                g = dxhat.matrix();
              }
            },
            [&](const Dropout&) {
              if (c.mask.size() > 0) g.array() *= c.mask.array();
            },
        },
        layers[k]);
  }
  return grads;
}

void update_running_statistics(const ModelConfig& config, Parameters& params,
                               const ForwardCache& cache, double momentum) {
  if (cache.mode != Mode::train) return;
  const auto layers = config.all_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!std::holds_alternative<BatchNorm>(layers[l])) continue;
    const LayerCache& c = cache.layers[l];
    LayerParameters& p = params.layers[l];
    const double n = static_cast<double>(c.normalized.rows());
    const double unbiased = n > 1.0 ? n / (n - 1.0) : 1.0;
    p.running_mean = (1.0 - momentum) * p.running_mean + momentum * c.batch_mean;
    p.running_var = (1.0 - momentum) * p.running_var + (momentum * unbiased) * c.batch_var;
  }
}

// ---------------------------------------------------------------------------

double masked_mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets,
                  std::span<const Index> mask) {
  if (mask.empty()) throw std::invalid_argument("masked_mse needs a non-empty mask");
  double sum = 0.0;
  for (const Index i : mask) {
    const double r = predictions(i) - targets(i);
    sum += r * r;
  }
  return sum / static_cast<double>(mask.size());
}

Eigen::VectorXd masked_mse_gradient(const Eigen::VectorXd& predictions,
                                    const Eigen::VectorXd& targets, std::span<const Index> mask) {
  if (mask.empty()) throw std::invalid_argument("masked_mse needs a non-empty mask");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(predictions.size());
  const double scale = 2.0 / static_cast<double>(mask.size());
  for (const Index i : mask) grad(i) += scale * (predictions(i) - targets(i));
  return grad;
}

// ---------------------------------------------------------------------------

AdamState make_adam_state(const Parameters& params) {
  return AdamState{0, zeros_like(params), zeros_like(params)};
}

void adam_step(const ModelConfig& config, Parameters& params, const Parameters& grads,
               AdamState& state, const AdamSettings& s) {
  if (grads.layers.size() != params.layers.size() ||
      state.first_moment.layers.size() != params.layers.size()) {
    throw std::invalid_argument("gradient or optimizer state does not match the parameters");
  }
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    require_finite(grads.layers[l].weight, l, "weight", config);
    require_finite(grads.layers[l].bias, l, "bias", config);
    require_finite(grads.layers[l].gamma, l, "gamma", config);
    require_finite(grads.layers[l].beta, l, "beta", config);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(s.beta1, t);
  const double correction2 = 1.0 - std::pow(s.beta2, t);

  const auto update = [&](auto& value, const auto& grad, auto& m, auto& v, double decay) {
    if (value.size() == 0) return;
    const auto g = (grad.array() + decay * value.array()).eval();
    m.array() = s.beta1 * m.array() + (1.0 - s.beta1) * g;
    v.array() = s.beta2 * v.array() + (1.0 - s.beta2) * g.square();
    value.array() -= s.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + s.epsilon);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& p = params.layers[l];
    const auto& g = grads.layers[l];
    auto& m = state.first_moment.layers[l];
    auto& v = state.second_moment.layers[l];
    update(p.weight, g.weight, m.weight, v.weight, s.weight_decay);
    update(p.bias, g.bias, m.bias, v.bias, 0.0);
    update(p.gamma, g.gamma, m.gamma, v.gamma, 0.0);
    update(p.beta, g.beta, m.beta, v.beta, 0.0);
  }
}

}  // namespace cyclegcn
