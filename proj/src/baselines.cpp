#include "cyclegcn/baselines.hpp"

#include "cyclegcn/errors.hpp"
#include "cyclegcn/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cyclegcn {

namespace {

void check_training_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() < 1) throw DataError("baseline fit needs at least one row");
  if (x.rows() != y.size()) throw std::invalid_argument("feature rows and targets differ in length");
}

}  // namespace

// ---------------------------------------------------------------------------
// Ridge

Eigen::VectorXd RidgeModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != coefficients.size()) throw std::invalid_argument("ridge: feature count mismatch");
  return (x * coefficients).array() + intercept;
}

RidgeModel fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha) {
  check_training_data(x, y);
  if (!(alpha >= 0.0)) throw ConfigError("ridge alpha must be non-negative");
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += alpha;
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
    throw DataError("ridge system is singular; use alpha > 0");
  }
  RidgeModel model;
  model.alpha = alpha;
  model.coefficients = llt.solve(xc.transpose() * yc);
  model.intercept = y_mean - x_mean.dot(model.coefficients);
  return model;
}

// ---------------------------------------------------------------------------
// SVR

namespace {

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
  const Eigen::VectorXd a_norm = a.rowwise().squaredNorm();
  const Eigen::VectorXd b_norm = b.rowwise().squaredNorm();
  Eigen::MatrixXd k = -2.0 * (a * b.transpose());
  k.colwise() += a_norm;
  k.rowwise() += b_norm.transpose();
  return (-gamma * k.array().max(0.0)).exp().matrix();
}

}  // namespace

Eigen::VectorXd SvrModel::predict(const Eigen::MatrixXd& x) const {
  if (coefficients.size() == 0) return Eigen::VectorXd::Constant(x.rows(), bias);
  if (x.cols() != support_points.cols()) throw std::invalid_argument("svr: feature count mismatch");
  return (rbf_kernel(x, support_points, gamma) * coefficients).array() + bias;
}

SvrModel fit_svr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double c, double gamma,
                 double epsilon, const SvrOptions& options) {
  check_training_data(x, y);
  if (!(c > 0.0)) throw ConfigError("svr C must be positive");
  if (!(gamma > 0.0)) throw ConfigError("svr gamma must be positive");
  if (!(epsilon >= 0.0)) throw ConfigError("svr epsilon must be non-negative");
  if (!(options.tolerance > 0.0)) throw ConfigError("svr tolerance must be positive");

  // Doubled dual: variables t < l are alpha_t (sign +1), t >= l are alpha*_t
  // (sign -1). Minimize 0.5 a'Qa + p'a subject to sign'a = 0, 0 <= a <= C.
  const Index l = x.rows();
  const Index m = 2 * l;
  const Eigen::MatrixXd kernel = rbf_kernel(x, x, gamma);
  const auto sign = [l](Index t) { return t < l ? 1.0 : -1.0; };
  const auto base = [l](Index t) { return t < l ? t : t - l; };
  const auto q = [&](Index s, Index t) { return sign(s) * sign(t) * kernel(base(s), base(t)); };

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd p(m);
  for (Index t = 0; t < l; ++t) {
    p(t) = epsilon - y(t);
    p(t + l) = epsilon + y(t);
  }
  Eigen::VectorXd grad = p;
  constexpr double tau = 1e-12;
  const auto at_upper = [&](Index t) { return alpha(t) >= c; };
  const auto at_lower = [&](Index t) { return alpha(t) <= 0.0; };

  std::int64_t iteration = 0;
  double violation = 0.0;
  while (true) {
    double gmax = -std::numeric_limits<double>::infinity();
    Index i = -1;
    for (Index t = 0; t < m; ++t) {
      if (sign(t) > 0) {
        if (!at_upper(t) && -grad(t) >= gmax) {
          gmax = -grad(t);
          i = t;
        }
      } else if (!at_lower(t) && grad(t) >= gmax) {
        gmax = grad(t);
        i = t;
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    Index j = -1;
    double best_objective = std::numeric_limits<double>::infinity();
    if (i >= 0) {
      for (Index t = 0; t < m; ++t) {
        const double quad_raw = 2.0 - 2.0 * kernel(base(i), base(t));
        const double quad = std::max(quad_raw, tau);
        if (sign(t) > 0) {
          if (at_lower(t)) continue;
          const double diff = gmax + grad(t);
          gmax2 = std::max(gmax2, grad(t));
          if (diff > 0.0) {
            const double objective = -(diff * diff) / quad;
            if (objective <= best_objective) {
              best_objective = objective;
              j = t;
            }
          }
        } else {
          if (at_upper(t)) continue;
          const double diff = gmax - grad(t);
          gmax2 = std::max(gmax2, -grad(t));
          if (diff > 0.0) {
            const double objective = -(diff * diff) / quad;
            if (objective <= best_objective) {
              best_objective = objective;
              j = t;
            }
          }
        }
      }
    }
    violation = gmax + gmax2;
    if (i < 0 || j < 0 || violation < options.tolerance) break;
    if (iteration >= options.max_iterations) {
      // Duality gap: primal objective minus the dual objective.
      Eigen::VectorXd beta = alpha.head(l) - alpha.tail(l);
      const Eigen::VectorXd f = kernel * beta;
      double primal = 0.5 * beta.dot(f);
      for (Index t = 0; t < l; ++t) primal += c * std::max(0.0, std::abs(y(t) - f(t)) - epsilon);
      const double dual = -0.5 * alpha.dot(grad + p);
      throw std::runtime_error("svr did not converge after " + std::to_string(iteration) +
                               " iterations; duality gap " + std::to_string(primal - dual) +
                               ", KKT violation " + std::to_string(violation));
    }
    ++iteration;

    const double old_i = alpha(i);
    const double old_j = alpha(j);
    const double qij = q(i, j);
    if (sign(i) != sign(j)) {
      const double quad = std::max(2.0 + 2.0 * qij, tau);
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0.0) {
        if (alpha(j) < 0.0) {
          alpha(j) = 0.0;
          alpha(i) = diff;
        }
      } else if (alpha(i) < 0.0) {
        alpha(i) = 0.0;
        alpha(j) = -diff;
      }
      if (diff > 0.0) {
        if (alpha(i) > c) {
          alpha(i) = c;
          alpha(j) = c - diff;
        }
      } else if (alpha(j) > c) {
        alpha(j) = c;
        alpha(i) = c + diff;
      }
    } else {
      const double quad = std::max(2.0 - 2.0 * qij, tau);
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > c) {
        if (alpha(i) > c) {
          alpha(i) = c;
          alpha(j) = sum - c;
        }
      } else if (alpha(j) < 0.0) {
        alpha(j) = 0.0;
        alpha(i) = sum;
      }
      if (sum > c) {
        if (alpha(j) > c) {
          alpha(j) = c;
          alpha(i) = sum - c;
        }
      } else if (alpha(i) < 0.0) {
        alpha(i) = 0.0;
        alpha(j) = sum;
      }
    }
    const double di = alpha(i) - old_i;
    const double dj = alpha(j) - old_j;
    const double si = sign(i) * di;
    const double sj = sign(j) * dj;
    const auto ki = kernel.col(base(i));
    const auto kj = kernel.col(base(j));
    grad.head(l) += si * ki + sj * kj;
    grad.tail(l) -= si * ki + sj * kj;
  }

  // Offset from free variables, or the midpoint of the feasible interval.
  double upper = std::numeric_limits<double>::infinity();
  double lower = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  Index free_count = 0;
  for (Index t = 0; t < m; ++t) {
    const double yg = sign(t) * grad(t);
    if (at_upper(t)) {
      if (sign(t) < 0) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else if (at_lower(t)) {
      if (sign(t) > 0) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : 0.5 * (upper + lower);

  SvrModel model;
  model.c = c;
  model.gamma = gamma;
  model.epsilon = epsilon;
  model.bias = -rho;
  model.iterations = iteration;
  const Eigen::VectorXd beta = alpha.head(l) - alpha.tail(l);
  std::vector<Index> support;
  for (Index t = 0; t < l; ++t) {
    if (beta(t) != 0.0) support.push_back(t);
  }
  model.support_points.resize(static_cast<Index>(support.size()), x.cols());
  model.coefficients.resize(static_cast<Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) {
    model.support_points.row(static_cast<Index>(k)) = x.row(support[k]);
    model.coefficients(static_cast<Index>(k)) = beta(support[k]);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Forest

double RegressionTree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  if (nodes.empty()) throw std::logic_error("empty regression tree");
  Index at = 0;
  while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
    const TreeNode& node = nodes[static_cast<std::size_t>(at)];
    at = row(node.feature) <= node.threshold ? node.left : node.right;
  }
  return nodes[static_cast<std::size_t>(at)].value;
}

int RegressionTree::depth() const {
  int deepest = 0;
  for (const TreeNode& node : nodes) deepest = std::max(deepest, node.depth);
  return deepest;
}

Eigen::VectorXd ForestModel::predict(const Eigen::MatrixXd& x) const {
  if (trees.empty()) throw std::logic_error("forest has no trees");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  for (const RegressionTree& tree : trees) {
    for (Index r = 0; r < x.rows(); ++r) out(r) += tree.predict_row(x.row(r));
  }
  return out / static_cast<double>(trees.size());
}

std::optional<SplitChoice> best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      std::span<const Index> rows, int min_samples_leaf) {
  const auto n = static_cast<Index>(rows.size());
  const Index leaf = std::max(1, min_samples_leaf);
  if (n < 2 * leaf) return std::nullopt;
  double total = 0.0;
  double total_sq = 0.0;
  for (const Index r : rows) {
    total += y(r);
    total_sq += y(r) * y(r);
  }
  const double parent_sse = total_sq - total * total / static_cast<double>(n);

  std::optional<SplitChoice> best;
  std::vector<std::pair<double, double>> pairs(rows.size());
  for (Index f = 0; f < x.cols(); ++f) {
    for (std::size_t k = 0; k < rows.size(); ++k) pairs[k] = {x(rows[k], f), y(rows[k])};
    std::sort(pairs.begin(), pairs.end());
    double left_sum = 0.0;
    double left_sq = 0.0;
    for (Index k = 0; k + 1 < n; ++k) {
      left_sum += pairs[static_cast<std::size_t>(k)].second;
      left_sq += pairs[static_cast<std::size_t>(k)].second * pairs[static_cast<std::size_t>(k)].second;
      const Index left_n = k + 1;
      const Index right_n = n - left_n;
      if (left_n < leaf) continue;
      if (right_n < leaf) break;
      const double here = pairs[static_cast<std::size_t>(k)].first;
      const double next = pairs[static_cast<std::size_t>(k + 1)].first;
      if (!(here < next)) continue;
      const double right_sum = total - left_sum;
      const double right_sq = total_sq - left_sq;
      const double child_sse = (left_sq - left_sum * left_sum / static_cast<double>(left_n)) +
                               (right_sq - right_sum * right_sum / static_cast<double>(right_n));
      const double reduction = parent_sse - child_sse;
      if (!best || reduction > best->sse_reduction) {
        double threshold = here + (next - here) / 2.0;
        if (!(threshold < next)) threshold = here;
        best = SplitChoice{f, threshold, reduction};
      }
    }
  }
  return best;
}

RegressionTree fit_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<Index> rows,
                        const ForestParams& params) {
  if (rows.empty()) throw DataError("cannot fit a tree on zero rows");
  RegressionTree tree;
  struct Pending {
    Index node;
    std::vector<Index> rows;
  };
  std::vector<Pending> stack;
  tree.nodes.push_back(TreeNode{});
  stack.push_back({0, std::move(rows)});
  while (!stack.empty()) {
    Pending item = std::move(stack.back());
    stack.pop_back();
    const auto at = static_cast<std::size_t>(item.node);
    double sum = 0.0;
    for (const Index r : item.rows) sum += y(r);
    const auto count = static_cast<Index>(item.rows.size());
    tree.nodes[at].value = sum / static_cast<double>(count);
    tree.nodes[at].samples = count;
    const int depth = tree.nodes[at].depth;

    const bool depth_ok = !params.max_depth || depth < *params.max_depth;
    const bool pure = std::all_of(item.rows.begin(), item.rows.end(),
                                  [&](Index r) { return y(r) == y(item.rows.front()); });
    if (!depth_ok || pure || count < params.min_samples_split) continue;
    const auto split = best_split(x, y, item.rows, params.min_samples_leaf);
    if (!split) continue;

    std::vector<Index> left;
    std::vector<Index> right;
    for (const Index r : item.rows) {
      (x(r, split->feature) <= split->threshold ? left : right).push_back(r);
    }
    const auto left_id = static_cast<Index>(tree.nodes.size());
    const Index right_id = left_id + 1;
    TreeNode child;
    child.depth = depth + 1;
    tree.nodes.push_back(child);
    tree.nodes.push_back(child);
    tree.nodes[at].feature = split->feature;
    tree.nodes[at].threshold = split->threshold;
    tree.nodes[at].left = left_id;
    tree.nodes[at].right = right_id;
    stack.push_back({right_id, std::move(right)});
    stack.push_back({left_id, std::move(left)});
  }
  return tree;
}

ForestModel fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const ForestParams& params, std::uint64_t seed) {
  check_training_data(x, y);
  if (params.n_estimators < 1) throw ConfigError("forest needs at least one estimator");
  if (params.max_depth && *params.max_depth < 0) throw ConfigError("max_depth must be non-negative");
  if (params.min_samples_split < 2) throw ConfigError("min_samples_split must be at least 2");
  if (params.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be at least 1");
  ForestModel forest;
  forest.params = params;
  forest.seed = seed;
  forest.trees.reserve(static_cast<std::size_t>(params.n_estimators));
  const Index n = x.rows();
  for (int t = 0; t < params.n_estimators; ++t) {
    std::vector<Index> rows(static_cast<std::size_t>(n));
    if (params.bootstrap) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
      for (Index& r : rows) r = static_cast<Index>(rng.index(static_cast<std::uint64_t>(n)));
    } else {
      std::iota(rows.begin(), rows.end(), Index{0});
    }
    forest.trees.push_back(fit_tree(x, y, std::move(rows), params));
  }
  return forest;
}

// ---------------------------------------------------------------------------
// Grid search

std::string family_name(BaselineFamily family) {
  switch (family) {
    case BaselineFamily::ridge: return "lr";
    case BaselineFamily::svr: return "svm";
    case BaselineFamily::forest: return "rf";
  }
  return "?";
}

BaselineFamily family_of(const BaselineParams& params) {
  return static_cast<BaselineFamily>(params.index());
}

std::string params_json(const BaselineParams& params) {
  nlohmann::ordered_json j;
  if (const auto* r = std::get_if<RidgeParams>(&params)) {
    j["alpha"] = r->alpha;
  } else if (const auto* s = std::get_if<SvrParams>(&params)) {
    j["C"] = s->c;
    j["gamma"] = s->gamma;
    j["epsilon"] = s->epsilon;
  } else {
    const auto& f = std::get<ForestParams>(params);
    j["n_estimators"] = f.n_estimators;
    j["max_depth"] = f.max_depth ? nlohmann::ordered_json(*f.max_depth) : nlohmann::ordered_json();
    j["min_samples_split"] = f.min_samples_split;
    j["min_samples_leaf"] = f.min_samples_leaf;
    j["bootstrap"] = f.bootstrap;
  }
  return j.dump();
}

BaselineModel BaselineModel::fit(const BaselineParams& params, const Eigen::MatrixXd& x,
                                 const Eigen::VectorXd& y, std::uint64_t seed) {
  BaselineModel out;
  if (const auto* r = std::get_if<RidgeParams>(&params)) {
    out.model_ = fit_ridge(x, y, r->alpha);
  } else if (const auto* s = std::get_if<SvrParams>(&params)) {
    out.model_ = fit_svr(x, y, s->c, s->gamma, s->epsilon);
  } else {
    out.model_ = fit_forest(x, y, std::get<ForestParams>(params), seed);
  }
  return out;
}

Eigen::VectorXd BaselineModel::predict(const Eigen::MatrixXd& x) const {
  return std::visit([&](const auto& m) -> Eigen::VectorXd { return m.predict(x); }, model_);
}

std::vector<int> assign_folds(Index rows, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (rows < folds) throw DataError("cross-validation needs at least as many rows as folds");
  std::vector<Index> order(static_cast<std::size_t>(rows));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> fold(static_cast<std::size_t>(rows));
  for (std::size_t k = 0; k < order.size(); ++k) {
    fold[static_cast<std::size_t>(order[k])] = static_cast<int>(k % static_cast<std::size_t>(folds));
  }
  return fold;
}

GridSearchResult grid_search_cv(const GridSearchSpec& search, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& y) {
  if (search.grid.empty()) throw ConfigError("grid search needs a non-empty grid");
  for (const auto& point : search.grid) {
    if (family_of(point) != search.family) throw ConfigError("grid point of the wrong model family");
  }
  check_training_data(x, y);
  const std::vector<int> fold = assign_folds(x.rows(), search.folds, search.seed);

  struct FoldData {
    Eigen::MatrixXd train_x, test_x;
    Eigen::VectorXd train_y, test_y;
  };
  std::vector<FoldData> data(static_cast<std::size_t>(search.folds));
  for (int f = 0; f < search.folds; ++f) {
    std::vector<Index> train_rows;
    std::vector<Index> test_rows;
    for (Index r = 0; r < x.rows(); ++r) {
      (fold[static_cast<std::size_t>(r)] == f ? test_rows : train_rows).push_back(r);
    }
    FoldData& d = data[static_cast<std::size_t>(f)];
    d.train_x = x(train_rows, Eigen::all);
    d.train_y = y(train_rows);
    d.test_x = x(test_rows, Eigen::all);
    d.test_y = y(test_rows);
  }

  GridSearchResult result;
  result.mean_rmse.reserve(search.grid.size());
  for (std::size_t g = 0; g < search.grid.size(); ++g) {
    double total = 0.0;
    for (int f = 0; f < search.folds; ++f) {
      const FoldData& d = data[static_cast<std::size_t>(f)];
      const BaselineModel model = BaselineModel::fit(
          search.grid[g], d.train_x, d.train_y, derive_seed(search.seed, static_cast<std::uint64_t>(f) + 1));
      const double rmse = std::sqrt((model.predict(d.test_x) - d.test_y).squaredNorm() /
                                    static_cast<double>(d.test_y.size()));
      result.scores.push_back(CvScore{g, f, rmse});
      total += rmse;
    }
    result.mean_rmse.push_back(total / search.folds);
  }
  result.best_index = 0;
  for (std::size_t g = 1; g < result.mean_rmse.size(); ++g) {
    if (result.mean_rmse[g] < result.mean_rmse[result.best_index]) result.best_index = g;
  }
  result.best = search.grid[result.best_index];
  return result;
}

std::vector<BaselineParams> default_grid(BaselineFamily family) {
  std::vector<BaselineParams> grid;
  switch (family) {
    case BaselineFamily::ridge:
      for (const double a : {1e-4, 1e-3, 1e-2, 0.1, 1.0}) grid.emplace_back(RidgeParams{a});
      break;
    case BaselineFamily::svr:
      for (const double c : {0.1, 1.0, 10.0, 100.0}) {
        for (const double g : {1e-3, 1e-2, 0.1, 1.0}) grid.emplace_back(SvrParams{c, g, 0.1});
      }
      break;
    case BaselineFamily::forest:
      for (const int n : {100, 400, 1000}) {
        for (const std::optional<int> d : {std::optional<int>(3), std::optional<int>(5),
                                           std::optional<int>(10), std::optional<int>(20),
                                           std::optional<int>()}) {
          for (const int split : {2, 10}) {
            for (const int leaf : {1, 5}) grid.emplace_back(ForestParams{n, d, split, leaf, true});
          }
        }
      }
      break;
  }
  return grid;
}

BaselineParams default_params(BaselineFamily family) {
  switch (family) {
    case BaselineFamily::ridge: return RidgeParams{0.1};
    case BaselineFamily::svr: return SvrParams{10.0, 0.01, 0.1};
    case BaselineFamily::forest: return ForestParams{400, 20, 2, 1, true};
  }
  throw std::logic_error("unknown baseline family");
}

}  // namespace cyclegcn
