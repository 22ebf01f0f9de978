#include "cyclegcn/errors.hpp"
#include "cyclegcn/sparsity.hpp"
#include "cyclegcn/train.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace cyclegcn;

namespace {

struct Problem {
  NormalizedAdjacency adj;
  Eigen::MatrixXd x;
  TargetVector targets;
  SplitAssignment split;
};

// Counts driven by a linear function of the features, smoothed over the graph.
Problem make_problem(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Problem p;
  const auto graph = testing::random_graph(n, 4.0 / static_cast<double>(n), rng);
  p.adj = normalize(graph);
  p.x = testing::random_matrix(n, 4, rng).cwiseAbs();
  const Eigen::VectorXd w = Eigen::Vector4d(1.0, -0.5, 0.8, 0.2);
  const Eigen::VectorXd signal = spmm(p.adj.matrix, Eigen::MatrixXd(p.x * w)).col(0);
  std::vector<std::optional<std::int64_t>> aadb;
  std::vector<Index> labelled;
  for (Index i = 0; i < n; ++i) {
    aadb.push_back(static_cast<std::int64_t>(std::round(20.0 * std::exp(0.5 * signal(i)))));
    labelled.push_back(i);
  }
  p.split = split_nodes(labelled, kDefaultSplitRatios, seed);
  p.targets = build_target_vector(aadb, p.split.train, TransformKind::box_cox);
  return p;
}

TrainConfig quick(int epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.learning_rate = 1e-2;
  return c;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("training reduces the training loss") {
  const auto p = make_problem(80, 1);
  auto config = quick(200);
  config.early_stopping = false;
  const auto model = train(p.adj, p.x, p.targets, p.split, config_catalog("A", 4), config);
  REQUIRE(model.train_loss.size() == 200);
  CHECK(model.train_loss.back() < model.train_loss.front());
  CHECK(model.stopped_epoch == 200);
  CHECK(model.best_epoch == 200);
}

TEST_CASE("constant validation loss stops at patience + 1 and restores the first epoch") {
  const auto p = make_problem(60, 2);
  auto config = quick(2500);
  config.patience = 120;
  const auto constant = [](int, double) { return 0.25; };
  const auto model = train(p.adj, p.x, p.targets, p.split, config_catalog("B", 4), config, constant);
  CHECK(model.stopped_epoch == 121);
  CHECK(model.best_epoch == 1);
  CHECK(model.validation_loss.size() == 121);

  auto one = config;
  one.max_epochs = 1;
  one.early_stopping = false;
  const auto first = train(p.adj, p.x, p.targets, p.split, config_catalog("B", 4), one);
  for (std::size_t l = 0; l < model.parameters.layers.size(); ++l) {
    CHECK(model.parameters.layers[l].weight == first.parameters.layers[l].weight);
    CHECK(model.parameters.layers[l].running_mean == first.parameters.layers[l].running_mean);
  }

  std::vector<int> epochs;
  for (const auto& s : model.snapshots) epochs.push_back(s.epoch);
  CHECK(epochs == std::vector<int>{50, 100, 121});
}

TEST_CASE("snapshots every eval interval without early stopping") {
  const auto p = make_problem(50, 3);
  auto config = quick(150);
  config.early_stopping = false;
  const auto model = train(p.adj, p.x, p.targets, p.split, config_catalog("A", 4), config);
  std::vector<int> epochs;
  for (const auto& s : model.snapshots) epochs.push_back(s.epoch);
  CHECK(epochs == std::vector<int>{50, 100, 150});
  CHECK(model.snapshots.back().validation.count == p.split.validation.size());
}

TEST_CASE("same seed gives identical loss curves") {
  const auto p = make_problem(60, 4);
  auto config = quick(60);
  config.seed = 42;
  const auto g = config_catalog("G", 4);
  const auto a = train(p.adj, p.x, p.targets, p.split, g, config);
  const auto b = train(p.adj, p.x, p.targets, p.split, g, config);
  CHECK(a.train_loss == b.train_loss);
  CHECK(a.validation_loss == b.validation_loss);
  config.seed = 43;
  const auto c = train(p.adj, p.x, p.targets, p.split, g, config);
  CHECK(a.train_loss != c.train_loss);
}

TEST_CASE("returned parameters achieve the best recorded validation loss") {
  const auto p = make_problem(80, 5);
  auto config = quick(400);
  config.patience = 20;
  const auto model = train(p.adj, p.x, p.targets, p.split, config_catalog("C", 4), config);
  const double best = *std::min_element(model.validation_loss.begin(), model.validation_loss.end());
  const double returned =
      masked_mse(predict_transformed(model, p.adj, p.x), p.targets.transformed, p.split.validation);
  CHECK(returned == best);
  CHECK(model.validation_loss[static_cast<std::size_t>(model.best_epoch - 1)] == best);
  CHECK(model.best_epoch <= model.stopped_epoch);
  CHECK(model.stopped_epoch <= config.max_epochs);
}

TEST_CASE("early stopping bookkeeping honours min_delta") {
  EarlyStopping stop(2, 0.1);
  CHECK(stop.observe(1.0));
  CHECK(stop.observe(0.95));  // new best, but not a big enough improvement
  CHECK_FALSE(stop.should_stop());
  CHECK_FALSE(stop.observe(0.97));
  CHECK(stop.should_stop());
  CHECK(stop.best_epoch() == 2);
  CHECK(stop.best_loss() == 0.95);

  EarlyStopping reset(2, 0.1);
  reset.observe(1.0);
  reset.observe(1.0);
  reset.observe(0.5);
  CHECK_FALSE(reset.should_stop());
}

TEST_CASE("empty training set is rejected") {
  auto p = make_problem(40, 6);
  p.split.train.clear();
  CHECK_THROWS_AS(train(p.adj, p.x, p.targets, p.split, config_catalog("A", 4), quick(5)), DataError);
}

TEST_CASE("training configuration validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.split_ratios = {0.8, 0.1, 0.2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.dropout_p = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("metric examples") {
  const auto perfect = compute_metrics(vec({1, 2, 3}), vec({1, 2, 3}));
  CHECK(perfect.rmse == 0.0);
  CHECK(perfect.mae == 0.0);
  CHECK(*perfect.mape == 0.0);

  const auto single = compute_metrics(vec({10}), vec({8}));
  CHECK(single.rmse == 2.0);
  CHECK(single.mae == 2.0);
  CHECK(*single.mape == doctest::Approx(20.0).epsilon(1e-15));

  const auto zeros = compute_metrics(vec({0, 0}), vec({1, 3}));
  CHECK_FALSE(zeros.mape.has_value());
  CHECK(zeros.excluded_zero_targets == 2);
  CHECK(zeros.mse == 5.0);

  const auto mixed = compute_metrics(vec({0, 4}), vec({1, 5}));
  CHECK(mixed.excluded_zero_targets == 1);
  CHECK(*mixed.mape == 25.0);
}

TEST_CASE("metrics agree with a direct loop") {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const Index n = 1 + static_cast<Index>(rng.index(300));
    Eigen::VectorXd y(n), yhat(n);
    for (Index i = 0; i < n; ++i) {
      y(i) = std::floor(std::exp(rng.normal(2.0, 1.5)));
      yhat(i) = std::max(0.0, y(i) + rng.normal(0.0, 10.0));
    }
    double se = 0, ae = 0, pe = 0;
    int counted = 0;
    for (Index i = 0; i < n; ++i) {
      se += (y(i) - yhat(i)) * (y(i) - yhat(i));
      ae += std::abs(y(i) - yhat(i));
      if (y(i) >= 1.0) {
        pe += std::abs(y(i) - yhat(i)) / y(i);
        ++counted;
      }
    }
    const auto m = compute_metrics(y, yhat);
    CHECK(std::abs(m.mse - se / n) <= 1e-10 * std::max(1.0, se / n));
    CHECK(std::abs(m.mae - ae / n) <= 1e-10 * std::max(1.0, ae / n));
    CHECK(m.rmse == std::sqrt(m.mse));
    CHECK(m.mae <= m.rmse * (1.0 + 1e-15));
    if (counted > 0) CHECK(std::abs(*m.mape - 100.0 * pe / counted) <= 1e-10 * std::max(1.0, *m.mape));
  }
}

TEST_CASE("evaluation reports AADB units") {
  const auto p = make_problem(60, 10);
  auto config = quick(30);
  const auto model = train(p.adj, p.x, p.targets, p.split, config_catalog("A", 4), config);
  const auto m = evaluate(model, p.adj, p.x, p.targets, p.split.test);
  const Eigen::VectorXd truth = aadb_at(p.targets, p.split.test);
  const Eigen::VectorXd pred = gather(predict_aadb(model, p.adj, p.x), p.split.test);
  const auto direct = compute_metrics(truth, pred);
  CHECK(m.rmse == direct.rmse);
  CHECK(m.count == p.split.test.size());
  CHECK_THROWS_AS(evaluate(model, p.adj, p.x, p.targets, std::vector<Index>{}), std::invalid_argument);
}
