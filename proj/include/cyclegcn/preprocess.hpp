#pragma once

#include "cyclegcn/sparse.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cyclegcn {

// ---------------------------------------------------------------------------
// Target aggregation

/// Ceiling of the mean daily count. An empty series leaves the segment
/// unlabelled.
std::optional<std::int64_t> compute_aadb(std::span<const std::int64_t> daily_counts);

// ---------------------------------------------------------------------------
// Raw feature columns

struct ContinuousColumn {
  std::string name;
  std::vector<std::optional<double>> values;
};

struct CategoricalColumn {
  std::string name;
  std::vector<std::optional<std::string>> values;
};

struct RawFeatures {
  std::vector<ContinuousColumn> continuous;
  std::vector<CategoricalColumn> categorical;

  Index rows() const;
};

/// Fill values learned from the fitting rows.
struct ImputationValues {
  std::vector<double> continuous_means;
  std::vector<std::string> categorical_modes;
};

/// Mean over observed values among fit_rows. Throws DataError if none.
double fit_mean(const ContinuousColumn& column, std::span<const Index> fit_rows);
/// Mode over observed values among fit_rows; ties go to the lexicographically
/// smallest category. Throws DataError if none.
std::string fit_mode(const CategoricalColumn& column, std::span<const Index> fit_rows);

ImputationValues fit_imputation(const RawFeatures& raw, std::span<const Index> fit_rows);
RawFeatures apply_imputation(const RawFeatures& raw, const ImputationValues& fills);
RawFeatures impute(const RawFeatures& raw, std::span<const Index> fit_rows);

// ---------------------------------------------------------------------------
// Scaling and encoding

/// (x - min) / (max - min), clamped to [0, 1]. A constant fitted range maps
/// every value to 0.
template <typename Derived>
Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1> minmax_scale(
    const Eigen::DenseBase<Derived>& column, typename Derived::Scalar fitted_min,
    typename Derived::Scalar fitted_max) {
  using Scalar = typename Derived::Scalar;
  if (!(fitted_min <= fitted_max)) {
    throw std::invalid_argument("minmax_scale requires fitted_min <= fitted_max");
  }
  const Scalar span = fitted_max - fitted_min;
  if (span == Scalar(0)) {
    return Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(column.size());
  }
  return ((column.derived().array() - fitted_min) / span).min(Scalar(1)).max(Scalar(0));
}

/// Distinct categories among fit_rows in order of first appearance.
std::vector<std::string> fit_vocabulary(std::span<const std::string> values,
                                        std::span<const Index> fit_rows);

/// One column per vocabulary entry; unseen categories give an all-zero row.
Eigen::MatrixXd one_hot(std::span<const std::string> values, std::span<const std::string> vocab);

// ---------------------------------------------------------------------------
// Skewness and target transforms

/// Moment-based Fisher-Pearson coefficient g1 = m3 / m2^{3/2}.
template <typename Derived>
typename Derived::Scalar skewness(const Eigen::DenseBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  const Index n = values.size();
  if (n < 3) throw std::invalid_argument("skewness needs at least 3 values");
  const auto x = values.derived().array();
  const Scalar mean = x.mean();
  const auto centered = (x - mean).eval();
  const Scalar m2 = centered.square().mean();
  const Scalar m3 = (centered.square() * centered).mean();
  if (!(m2 > Scalar(0)) || m2 <= std::numeric_limits<Scalar>::epsilon() * mean * mean) {
    throw std::domain_error("undefined skewness: constant sample");
  }
  return m3 / std::pow(m2, Scalar(1.5));
}

enum class TransformKind { none, log, sqrt, quantile, yeo_johnson, box_cox };

std::string_view to_string(TransformKind kind);
TransformKind parse_transform_kind(std::string_view name);
/// Every kind, in report column order.
std::span<const TransformKind> all_transform_kinds();

/// Fitted parameters of a target transform.
struct TargetTransform {
  TransformKind kind = TransformKind::none;
  double lambda = 0.0;
  /// Added before Box-Cox when the fitting sample contains zeros.
  double shift = 0.0;
  /// Quantile map knots: sorted distinct fitted values and their
  /// midpoint plotting positions (ties share the average rank).
  std::vector<double> quantile_values;
  std::vector<double> quantile_probabilities;
};

/// Grid step and bounds used when fitting lambda by maximum likelihood.
inline constexpr double kLambdaMin = -5.0;
inline constexpr double kLambdaMax = 5.0;
inline constexpr int kLambdaSteps = 1000;

double box_cox(double x, double lambda);
double yeo_johnson(double x, double lambda);
double box_cox_log_likelihood(std::span<const double> positive_values, double lambda);
double yeo_johnson_log_likelihood(std::span<const double> values, double lambda);

/// Fits the transform parameters on `values`. For Box-Cox the shift defaults
/// to 1 when the sample contains a zero; callers may force it.
TargetTransform fit_target_transform(const Eigen::VectorXd& values, TransformKind kind,
                                     std::optional<double> box_cox_shift = std::nullopt);
/// Fits the transform on `values` and returns the transformed sample.
std::pair<Eigen::VectorXd, TargetTransform> transform_target(const Eigen::VectorXd& values,
                                                             TransformKind kind);
/// Applies an already fitted transform.
Eigen::VectorXd apply_transform(const TargetTransform& params, const Eigen::VectorXd& values);
/// Exact inverse. Throws std::domain_error for values outside the image of
/// the forward map.
Eigen::VectorXd inverse_transform_target(const Eigen::VectorXd& transformed,
                                         const TargetTransform& params);
/// Inverse for model outputs, which may leave the image of the forward map:
/// values are clamped to the nearest invertible point and results floored at
/// zero.
Eigen::VectorXd inverse_transform_predictions(const Eigen::VectorXd& transformed,
                                              const TargetTransform& params);

// ---------------------------------------------------------------------------
// Feature table

struct FeatureParams {
  std::vector<std::string> continuous_names;
  std::vector<std::string> categorical_names;
  ImputationValues fills;
  std::vector<double> minimums;
  std::vector<double> maximums;
  std::vector<std::vector<std::string>> vocabularies;
};

/// Everything fitted during preprocessing; serialized as JSON for reuse.
struct TransformParams {
  FeatureParams features;
  TargetTransform target;
};

struct FeatureTable {
  Eigen::MatrixXd matrix;
  std::vector<std::string> feature_names;
  FeatureParams fitted;
};

/// Imputation, Min-Max scaling and one-hot encoding, all fitted on fit_rows
/// and applied to every row. Continuous columns come first.
FeatureTable build_feature_table(const RawFeatures& raw, std::span<const Index> fit_rows);
FeatureTable apply_feature_params(const RawFeatures& raw, const FeatureParams& params);

/// Per-node targets. `transformed` is NaN where `labelled` is false.
struct TargetVector {
  std::vector<std::int64_t> aadb;
  std::vector<bool> labelled;
  Eigen::VectorXd transformed;
  TargetTransform transform;
};

/// Fits `kind` on the labelled nodes listed in fit_rows and transforms every
/// labelled node.
TargetVector build_target_vector(const std::vector<std::optional<std::int64_t>>& aadb,
                                 std::span<const Index> fit_rows, TransformKind kind);

}  // namespace cyclegcn
