#include "cyclegcn/errors.hpp"
#include "cyclegcn/model.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace cyclegcn;

namespace {

std::vector<std::string> layer_names(const ModelConfig& config) {
  std::vector<std::string> names;
  for (const auto& layer : config.all_layers()) names.push_back(describe(layer));
  return names;
}

// Counts weights and biases from the layer dimensions alone.
std::size_t counted_parameters(const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& layer : config.all_layers()) {
    if (const auto* c = std::get_if<GcnConv>(&layer)) total += c->in_dim * c->out_dim + c->out_dim;
    if (const auto* f = std::get_if<FullyConnected>(&layer)) total += f->in_dim * f->out_dim + f->out_dim;
    if (const auto* b = std::get_if<BatchNorm>(&layer)) total += 2 * b->dim;
  }
  return total;
}

NormalizedAdjacency identity_adjacency(Index n) { return {SparseMatrix<double>::identity(n)}; }

ModelConfig custom(std::vector<LayerSpec> layers, Index last) {
  ModelConfig c;
  c.layers = std::move(layers);
  c.output_head = FullyConnected{last, 1};
  c.validate();
  return c;
}

}  // namespace

TEST_CASE("catalog A layer sequence") {
  const auto a = config_catalog("A", 10);
  CHECK(layer_names(a) == std::vector<std::string>{"GCNConv(10->32)", "ReLU", "GCNConv(32->64)",
                                                   "ReLU", "FC(64->64)", "ReLU", "FC(64->1)"});
}

TEST_CASE("catalog G layer sequence") {
  const auto g = config_catalog("G", 12);
  CHECK(layer_names(g) ==
        std::vector<std::string>{"GCNConv(12->32)", "ReLU", "GCNConv(32->64)", "ReLU",
                                 "BatchNorm(64)", "Dropout(0.4)", "GCNConv(64->128)", "ReLU",
                                 "BatchNorm(128)", "Dropout(0.4)", "GCNConv(128->256)", "ReLU",
                                 "FC(256->256)", "ReLU", "Dropout(0.4)", "FC(256->128)", "ReLU",
                                 "Dropout(0.4)", "FC(128->64)", "ReLU", "FC(64->1)"});
}

TEST_CASE("catalog I starts at 64 channels") {
  const auto i = config_catalog("I", 5);
  CHECK(std::get<GcnConv>(i.layers.front()).out_dim == 64);
}

TEST_CASE("every catalog label builds and ends in a scalar head") {
  for (const auto label : catalog_labels()) {
    const auto c = config_catalog(label, 7);
    CHECK(c.label == label);
    CHECK(c.feature_dim() == 7);
    CHECK(c.output_head.out_dim == 1);
    CHECK(std::holds_alternative<GcnConv>(c.layers.front()));
  }
  CHECK(catalog_labels().size() == 10);
}

TEST_CASE("unknown label is a configuration error") {
  CHECK_THROWS_AS(config_catalog("K", 10), ConfigError);
}

TEST_CASE("parameter count of A with ten features") {
  const auto a = config_catalog("A", 10);
  const auto params = initialize_parameters(a, 1);
  CHECK(parameter_count(params) == 6689);
  CHECK(counted_parameters(a) == 6689);
  for (const auto label : catalog_labels()) {
    const auto c = config_catalog(label, 9);
    CHECK(parameter_count(initialize_parameters(c, 2)) == counted_parameters(c));
  }
}

TEST_CASE("mismatched dimensions and bad dropout are rejected") {
  ModelConfig c;
  c.layers = {GcnConv{3, 4}, FullyConnected{5, 2}};
  c.output_head = FullyConnected{2, 1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  ModelConfig d;
  d.layers = {GcnConv{3, 4}, Dropout{1.0}};
  d.output_head = FullyConnected{4, 1};
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("initialization follows the documented scheme") {
  const auto g = config_catalog("G", 12);
  const auto p = initialize_parameters(g, 9);
  const auto layers = g.all_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (const auto* c = std::get_if<GcnConv>(&layers[l])) {
      const double limit = std::sqrt(6.0 / static_cast<double>(c->in_dim + c->out_dim));
      CHECK(p.layers[l].weight.cwiseAbs().maxCoeff() <= limit);
      CHECK(p.layers[l].bias.isZero(0.0));
    }
    if (std::holds_alternative<BatchNorm>(layers[l])) {
      CHECK(p.layers[l].gamma.isOnes(0.0));
      CHECK(p.layers[l].beta.isZero(0.0));
      CHECK(p.layers[l].running_var.isOnes(0.0));
    }
  }
  const auto again = initialize_parameters(g, 9);
  CHECK(again.layers[0].weight == p.layers[0].weight);
}

TEST_CASE("graph convolution with identity adjacency and weight passes features through") {
  Rng rng(1);
  const Eigen::MatrixXd x = testing::random_matrix(6, 3, rng);
  const auto config = custom({GcnConv{3, 3}}, 3);
  auto params = initialize_parameters(config, 0);
  params.layers[0].weight = Eigen::MatrixXd::Identity(3, 3);
  const auto result = forward(config, params, x, identity_adjacency(6), Mode::eval);
  // The head caches its input, which is the convolution output.
  CHECK(result.cache.layers[1].input == x);
}

TEST_CASE("two-node convolution worked example") {
  const auto config = custom({GcnConv{1, 1}}, 1);
  auto params = initialize_parameters(config, 0);
  params.layers[0].weight.setConstant(1.0);
  params.layers[1].weight.setConstant(1.0);
  Eigen::MatrixXd x(2, 1);
  x << 2, 4;
  const auto adj = normalize(build_graph({"a", "b"}, testing::EdgePairs{{"a", "b"}}));
  const auto out = forward(config, params, x, adj, Mode::eval).predictions;
  CHECK(out(0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(out(1) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("dropout with p = 0 is the identity in train mode") {
  Rng rng(2);
  const Eigen::MatrixXd x = testing::random_matrix(8, 4, rng);
  const auto config = custom({GcnConv{4, 5}, Relu{}, Dropout{0.0}, FullyConnected{5, 3}, Relu{}}, 3);
  const auto params = initialize_parameters(config, 3);
  const auto adj = normalize(testing::random_graph(8, 0.3, rng));
  const auto train = forward(config, params, x, adj, Mode::train, &rng).predictions;
  const auto eval = forward(config, params, x, adj, Mode::eval).predictions;
  CHECK(train == eval);
}

TEST_CASE("eval-mode forward is bitwise deterministic") {
  Rng rng(4);
  const auto g = config_catalog("J", 6);
  const auto params = initialize_parameters(g, 5);
  const Eigen::MatrixXd x = testing::random_matrix(30, 6, rng);
  const auto adj = normalize(testing::random_graph(30, 0.15, rng));
  const auto a = forward(g, params, x, adj, Mode::eval).predictions;
  const auto b = forward(g, params, x, adj, Mode::eval).predictions;
  CHECK(a == b);
}

TEST_CASE("train-mode batch norm standardizes each feature") {
  Rng rng(6);
  const auto config = custom({GcnConv{4, 6}, Relu{}, BatchNorm{6}}, 6);
  auto params = initialize_parameters(config, 1);
  params.layers[0].bias.setConstant(0.5);  // keeps every ReLU column non-degenerate
  const Eigen::MatrixXd x = testing::random_matrix(40, 4, rng);
  const auto adj = normalize(testing::random_graph(40, 0.1, rng));
  const auto result = forward(config, params, x, adj, Mode::train, &rng);
  const Eigen::MatrixXd& xhat = result.cache.layers[2].normalized;
  const Eigen::RowVectorXd mean = xhat.colwise().mean();
  const Eigen::RowVectorXd var = (xhat.rowwise() - mean).array().square().colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-6);
  // The epsilon in the denominator keeps the variance just below one.
  CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-3);
  const double smallest = result.cache.layers[2].batch_var.minCoeff();
  CHECK((var.array() - 1.0).abs().maxCoeff() <= kBatchNormEpsilon / smallest + 1e-9);
}

TEST_CASE("running statistics blend with momentum and the unbiased variance") {
  Rng rng(8);
  const auto config = custom({GcnConv{2, 3}, BatchNorm{3}}, 3);
  auto params = initialize_parameters(config, 2);
  const Eigen::MatrixXd x = testing::random_matrix(10, 2, rng);
  const auto adj = identity_adjacency(10);
  const auto pass = forward(config, params, x, adj, Mode::train, &rng);
  const Eigen::MatrixXd h = x * params.layers[0].weight;
  const Eigen::RowVectorXd mean = h.colwise().mean();
  const Eigen::RowVectorXd unbiased = (h.rowwise() - mean).array().square().colwise().sum() / 9.0;
  update_running_statistics(config, params, pass.cache, 0.1);
  CHECK((params.layers[1].running_mean - 0.1 * mean).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((params.layers[1].running_var - (Eigen::RowVectorXd::Constant(3, 0.9) + 0.1 * unbiased))
            .cwiseAbs()
            .maxCoeff() < 1e-14);
}

TEST_CASE("averaged dropout passes approximate the eval output of a linear network") {
  Rng rng(10);
  const auto config = custom({GcnConv{3, 8}, Dropout{0.4}, FullyConnected{8, 4}}, 4);
  auto params = initialize_parameters(config, 3);
  params.layers[0].bias.setConstant(1.0);
  params.layers[2].bias.setConstant(2.0);
  params.layers[3].bias.setConstant(3.0);
  const Eigen::MatrixXd x = testing::random_matrix(5, 3, rng).cwiseAbs();
  const auto adj = normalize(testing::random_graph(5, 0.5, rng));
  const auto eval = forward(config, params, x, adj, Mode::eval).predictions;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(5);
  constexpr int draws = 10000;
  for (int d = 0; d < draws; ++d) sum += forward(config, params, x, adj, Mode::train, &rng).predictions;
  const Eigen::VectorXd mean = sum / draws;
  for (Index i = 0; i < 5; ++i) CHECK(std::abs(mean(i) - eval(i)) <= 0.02 * std::abs(eval(i)));
}

TEST_CASE("dropout keeps the expected share and scales survivors") {
  Rng rng(12);
  const auto config = custom({GcnConv{1, 200}, Dropout{0.4}}, 200);
  const auto params = initialize_parameters(config, 0);
  const auto pass =
      forward(config, params, Eigen::MatrixXd::Ones(50, 1), identity_adjacency(50), Mode::train, &rng);
  const Eigen::MatrixXd& mask = pass.cache.layers[1].mask;
  CHECK(((mask.array() == 0.0) || (mask.array() == 1.0 / 0.6)).all());
  const double kept = (mask.array() > 0.0).cast<double>().mean();
  CHECK(kept == doctest::Approx(0.6).epsilon(0.02));
}

TEST_CASE("masked mse examples and oracle") {
  Eigen::VectorXd pred(2), target(2);
  pred << 1, 9;
  target << 1, 5;
  CHECK(masked_mse(pred, target, std::vector<Index>{1}) == 16.0);
  CHECK(masked_mse(pred, pred, std::vector<Index>{0, 1}) == 0.0);
  CHECK_THROWS_AS(masked_mse(pred, target, std::vector<Index>{}), std::invalid_argument);

  Rng rng(13);
  const Eigen::VectorXd p = testing::random_vector(100, rng);
  const Eigen::VectorXd t = testing::random_vector(100, rng);
  std::vector<Index> mask;
  for (Index i = 0; i < 100; ++i) {
    if (rng.bernoulli(0.5)) mask.push_back(i);
  }
  double sum = 0.0;
  for (const Index i : mask) sum += (p(i) - t(i)) * (p(i) - t(i));
  CHECK(std::abs(masked_mse(p, t, mask) - sum / static_cast<double>(mask.size())) <= 1e-12);
}

TEST_CASE("gradients vanish at a stationary point") {
  Rng rng(14);
  const auto d = config_catalog("D", 4);
  const auto params = initialize_parameters(d, 1);
  const Eigen::MatrixXd x = testing::random_matrix(12, 4, rng);
  const auto adj = normalize(testing::random_graph(12, 0.3, rng));
  const auto pass = forward(d, params, x, adj, Mode::train, &rng);
  std::vector<Index> mask{0, 3, 5, 7};
  const auto grads =
      backward(d, params, pass.cache, adj, masked_mse_gradient(pass.predictions, pass.predictions, mask));
  for (const auto& g : grads.layers) {
    CHECK(g.weight.isZero(0.0));
    CHECK(g.bias.isZero(0.0));
    CHECK(g.gamma.isZero(0.0));
    CHECK(g.beta.isZero(0.0));
  }
}

TEST_CASE("config D gradients match central differences") {
  Rng rng(15);
  auto problem = testing::make_grad_problem(20, 5, rng);
  const auto d = config_catalog("D", 5);
  auto params = initialize_parameters(d, 3);
  // Perturb BatchNorm affine parameters away from their trivial initial values.
  for (auto& p : params.layers) {
    if (p.gamma.size() > 0) {
      for (Index i = 0; i < p.gamma.size(); ++i) {
        p.gamma(i) = rng.uniform(0.5, 1.5);
        p.beta(i) = rng.normal(0.0, 0.1);
      }
    }
  }
  const auto result = testing::check_gradients(d, params, problem.x, problem.adj, problem.targets,
                                               problem.mask, rng, 1'000'000);
  CHECK(result.checked == parameter_count(params));
  CHECK(result.pass_rate() >= 0.999);
}

TEST_CASE("tail re-evaluation agrees with full forward passes") {
  for (const char* label : {"G", "J"}) {
    Rng setup(16);
    auto problem = testing::make_grad_problem(20, 6, setup);
    const auto config = config_catalog(label, 6);
    const auto params = initialize_parameters(config, 4);
    Rng a(5), b(5);
    const auto fast = testing::check_gradients(config, params, problem.x, problem.adj, problem.targets,
                                               problem.mask, a, 25);
    const auto full = testing::check_gradients(config, params, problem.x, problem.adj, problem.targets,
                                               problem.mask, b, 25, 1e-5, 1e-4, true);
    CHECK(fast.checked == full.checked);
    CHECK(fast.passed == full.passed);
    CHECK(fast.worst == doctest::Approx(full.worst).epsilon(1e-3));
  }
}

TEST_CASE("weights feeding only unmasked nodes get zero gradient") {
  // Two components {0,1} and {2,3}; feature 1 is non-zero only on the second.
  const auto g = build_graph({"a", "b", "c", "d"}, testing::EdgePairs{{"a", "b"}, {"c", "d"}});
  const auto adj = normalize(g);
  Eigen::MatrixXd x(4, 2);
  x << 1, 0, 2, 0, 3, 5, 4, 6;
  const auto config = custom({GcnConv{2, 1}}, 1);
  auto params = initialize_parameters(config, 1);
  const Eigen::VectorXd target = Eigen::VectorXd::Constant(4, 10.0);
  const std::vector<Index> mask{0, 1};
  const auto pass = forward(config, params, x, adj, Mode::train);
  const auto grads =
      backward(config, params, pass.cache, adj, masked_mse_gradient(pass.predictions, target, mask));
  CHECK(grads.layers[0].weight(1, 0) == 0.0);
  CHECK(grads.layers[0].weight(0, 0) != 0.0);
}

TEST_CASE("adam leaves parameters alone for a zero gradient") {
  const auto a = config_catalog("A", 3);
  auto params = initialize_parameters(a, 1);
  const auto before = params;
  auto state = make_adam_state(params);
  adam_step(a, params, zeros_like(params), state, AdamSettings{});
  for (std::size_t l = 0; l < params.layers.size(); ++l) CHECK(params.layers[l].weight == before.layers[l].weight);
}

TEST_CASE("adam matches a scalar oracle") {
  const auto config = custom({FullyConnected{1, 1}}, 1);
  auto params = initialize_parameters(config, 1);
  auto grads = zeros_like(params);
  AdamSettings s;
  s.learning_rate = 1e-3;
  s.weight_decay = 0.01;
  auto state = make_adam_state(params);

  double w = params.layers[0].weight(0, 0);
  double b = params.layers[0].bias(0);
  double mw = 0, vw = 0, mb = 0, vb = 0;
  const double gs[] = {0.3, -1.2, 0.05, 2.0};
  for (int t = 1; t <= 4; ++t) {
    const double g = gs[t - 1];
    grads.layers[0].weight(0, 0) = g;
    grads.layers[0].bias(0) = -g;
    adam_step(config, params, grads, state, s);

    const double gw = g + 0.01 * w;  // coupled decay, weights only
    mw = 0.9 * mw + 0.1 * gw;
    vw = 0.999 * vw + 0.001 * gw * gw;
    w -= 1e-3 * (mw / (1 - std::pow(0.9, t))) / (std::sqrt(vw / (1 - std::pow(0.999, t))) + 1e-8);
    const double gb = -g;
    mb = 0.9 * mb + 0.1 * gb;
    vb = 0.999 * vb + 0.001 * gb * gb;
    b -= 1e-3 * (mb / (1 - std::pow(0.9, t))) / (std::sqrt(vb / (1 - std::pow(0.999, t))) + 1e-8);

    CHECK(std::abs(params.layers[0].weight(0, 0) - w) <= 1e-10);
    CHECK(std::abs(params.layers[0].bias(0) - b) <= 1e-10);
  }
}

TEST_CASE("first adam step moves by about the learning rate") {
  const auto config = custom({FullyConnected{1, 1}}, 1);
  auto params = initialize_parameters(config, 1);
  const double before = params.layers[0].weight(0, 0);
  auto grads = zeros_like(params);
  grads.layers[0].weight(0, 0) = -3.7;
  auto state = make_adam_state(params);
  adam_step(config, params, grads, state, AdamSettings{});
  CHECK(params.layers[0].weight(0, 0) - before == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("adam bias correction depends on the step counter") {
  const auto config = custom({FullyConnected{1, 1}}, 1);
  const auto start = initialize_parameters(config, 1);
  auto grads = zeros_like(start);
  grads.layers[0].weight(0, 0) = 0.5;

  auto twice = start;
  auto s1 = make_adam_state(twice);
  adam_step(config, twice, grads, s1, AdamSettings{});
  adam_step(config, twice, grads, s1, AdamSettings{});

  auto jumped = start;
  auto s2 = make_adam_state(jumped);
  s2.step = 1;
  adam_step(config, jumped, grads, s2, AdamSettings{});
  adam_step(config, jumped, grads, s2, AdamSettings{});
  CHECK(twice.layers[0].weight(0, 0) != jumped.layers[0].weight(0, 0));
}

TEST_CASE("adam rejects non-finite gradients and names the layer") {
  const auto a = config_catalog("A", 3);
  auto params = initialize_parameters(a, 1);
  auto grads = zeros_like(params);
  grads.layers[2].weight(0, 0) = std::nan("");
  auto state = make_adam_state(params);
  CHECK_THROWS_WITH_AS(adam_step(a, params, grads, state, AdamSettings{}),
                       doctest::Contains("layer 2"), std::runtime_error);
}

TEST_CASE("forward rejects wrong feature width") {
  const auto a = config_catalog("A", 3);
  const auto params = initialize_parameters(a, 1);
  CHECK_THROWS_AS(forward(a, params, Eigen::MatrixXd::Ones(4, 5), identity_adjacency(4), Mode::eval),
                  std::invalid_argument);
}
