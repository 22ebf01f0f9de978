#pragma once

#include "cyclegcn/sparse.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace cyclegcn {

// ---------------------------------------------------------------------------
// Ridge regression

struct RidgeModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  double alpha = 0.0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

/// Minimizes ||y - Xw - b||^2 + alpha ||w||^2 with an unpenalized intercept.
RidgeModel fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha);

// ---------------------------------------------------------------------------
// Support vector regression

struct SvrOptions {
  /// KKT violation tolerance of the dual solver.
  double tolerance = 1e-3;
  std::int64_t max_iterations = 10'000'000;
};

/// epsilon-insensitive SVR with the RBF kernel exp(-gamma ||a - b||^2).
struct SvrModel {
  Eigen::MatrixXd support_points;
  Eigen::VectorXd coefficients;  // alpha_i - alpha_i^*, each within [-C, C]
  double bias = 0.0;
  double c = 1.0;
  double gamma = 1.0;
  double epsilon = 0.1;
  std::int64_t iterations = 0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

/// Dual coordinate ascent over working pairs (SMO with second-order working
/// set selection). Throws std::runtime_error on hitting the iteration cap.
SvrModel fit_svr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double c, double gamma,
                 double epsilon, const SvrOptions& options = {});

// ---------------------------------------------------------------------------
// Random forest

struct ForestParams {
  int n_estimators = 400;
  /// Unlimited when empty.
  std::optional<int> max_depth = 20;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  bool bootstrap = true;
};

struct TreeNode {
  /// -1 for leaves.
  Index feature = -1;
  double threshold = 0.0;
  Index left = -1;
  Index right = -1;
  double value = 0.0;
  Index samples = 0;
  int depth = 0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  int depth() const;
};

struct ForestModel {
  std::vector<RegressionTree> trees;
  ForestParams params;
  std::uint64_t seed = 0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

/// Best squared-error split of rows over all features; ties go to the lower
/// feature index, then the lower threshold.
struct SplitChoice {
  Index feature = -1;
  double threshold = 0.0;
  double sse_reduction = 0.0;
};
std::optional<SplitChoice> best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      std::span<const Index> rows, int min_samples_leaf);

RegressionTree fit_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        std::vector<Index> rows, const ForestParams& params);
ForestModel fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const ForestParams& params, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Grid search

struct RidgeParams {
  double alpha = 0.1;
};
struct SvrParams {
  double c = 10.0;
  double gamma = 0.01;
  double epsilon = 0.1;
};

using BaselineParams = std::variant<RidgeParams, SvrParams, ForestParams>;

enum class BaselineFamily { ridge, svr, forest };

std::string family_name(BaselineFamily family);
BaselineFamily family_of(const BaselineParams& params);
/// Compact JSON object of the hyperparameters, stable key order.
std::string params_json(const BaselineParams& params);

/// A fitted baseline of any family.
class BaselineModel {
 public:
  static BaselineModel fit(const BaselineParams& params, const Eigen::MatrixXd& x,
                           const Eigen::VectorXd& y, std::uint64_t seed);
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

 private:
  std::variant<RidgeModel, SvrModel, ForestModel> model_;
};

struct GridSearchSpec {
  BaselineFamily family = BaselineFamily::ridge;
  std::vector<BaselineParams> grid;
  int folds = 5;
  std::uint64_t seed = 42;
};

struct CvScore {
  std::size_t grid_index = 0;
  int fold = 0;
  double rmse = 0.0;
};

struct GridSearchResult {
  BaselineParams best;
  std::size_t best_index = 0;
  std::vector<double> mean_rmse;  // per grid point
  std::vector<CvScore> scores;
};

/// Fold id per row: a seeded permutation dealt round-robin, so fold sizes
/// differ by at most one.
std::vector<int> assign_folds(Index rows, int folds, std::uint64_t seed);

GridSearchResult grid_search_cv(const GridSearchSpec& search, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& y);

/// Discretized grids: alpha {1e-4 .. 1}, C {0.1 .. 100} x gamma {1e-3 .. 1},
/// forest sets around 400 trees, depth 20.
std::vector<BaselineParams> default_grid(BaselineFamily family);
/// Tuned defaults used when no search is run.
BaselineParams default_params(BaselineFamily family);

}  // namespace cyclegcn
