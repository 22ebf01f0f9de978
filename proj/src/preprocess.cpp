#include "cyclegcn/preprocess.hpp"

#include "cyclegcn/errors.hpp"
#include "cyclegcn/stats.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <numeric>

namespace cyclegcn {

std::optional<std::int64_t> compute_aadb(std::span<const std::int64_t> daily_counts) {
  if (daily_counts.empty()) return std::nullopt;
  std::int64_t sum = 0;
  for (const auto c : daily_counts) {
    if (c < 0) throw DataError("daily counts must be non-negative, found " + std::to_string(c));
    sum += c;
  }
  const auto n = static_cast<std::int64_t>(daily_counts.size());
  return (sum + n - 1) / n;
}

Index RawFeatures::rows() const {
  std::optional<std::size_t> n;
  const auto check = [&](std::size_t size, const std::string& name) {
    if (!n) n = size;
    if (*n != size) throw DataError("column '" + name + "' has inconsistent length");
  };
  for (const auto& c : continuous) check(c.values.size(), c.name);
  for (const auto& c : categorical) check(c.values.size(), c.name);
  return static_cast<Index>(n.value_or(0));
}

double fit_mean(const ContinuousColumn& column, std::span<const Index> fit_rows) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto r : fit_rows) {
    if (const auto& v = column.values[static_cast<std::size_t>(r)]) {
      sum += *v;
      ++count;
    }
  }
  if (count == 0) throw DataError("column '" + column.name + "' has no observed values");
  return sum / static_cast<double>(count);
}

std::string fit_mode(const CategoricalColumn& column, std::span<const Index> fit_rows) {
  std::map<std::string, std::size_t> counts;
  for (const auto r : fit_rows) {
    if (const auto& v = column.values[static_cast<std::size_t>(r)]) ++counts[*v];
  }
  if (counts.empty()) throw DataError("column '" + column.name + "' has no observed values");
  // std::map iterates in lexicographic order, so strict > keeps the smallest
  // category among ties.
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

ImputationValues fit_imputation(const RawFeatures& raw, std::span<const Index> fit_rows) {
  ImputationValues fills;
  for (const auto& c : raw.continuous) fills.continuous_means.push_back(fit_mean(c, fit_rows));
  for (const auto& c : raw.categorical) fills.categorical_modes.push_back(fit_mode(c, fit_rows));
  return fills;
}

RawFeatures apply_imputation(const RawFeatures& raw, const ImputationValues& fills) {
  if (fills.continuous_means.size() != raw.continuous.size() ||
      fills.categorical_modes.size() != raw.categorical.size()) {
    throw std::invalid_argument("imputation values do not match the feature columns");
  }
  RawFeatures out = raw;
  for (std::size_t c = 0; c < out.continuous.size(); ++c) {
    for (auto& v : out.continuous[c].values) {
      if (!v) v = fills.continuous_means[c];
    }
  }
  for (std::size_t c = 0; c < out.categorical.size(); ++c) {
    for (auto& v : out.categorical[c].values) {
      if (!v) v = fills.categorical_modes[c];
    }
  }
  return out;
}

RawFeatures impute(const RawFeatures& raw, std::span<const Index> fit_rows) {
  return apply_imputation(raw, fit_imputation(raw, fit_rows));
}

std::vector<std::string> fit_vocabulary(std::span<const std::string> values,
                                        std::span<const Index> fit_rows) {
  std::vector<std::string> vocab;
  for (const auto r : fit_rows) {
    const auto& v = values[static_cast<std::size_t>(r)];
    if (std::find(vocab.begin(), vocab.end(), v) == vocab.end()) vocab.push_back(v);
  }
  return vocab;
}

Eigen::MatrixXd one_hot(std::span<const std::string> values, std::span<const std::string> vocab) {
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(static_cast<Index>(values.size()),
                                                static_cast<Index>(vocab.size()));
  for (std::size_t r = 0; r < values.size(); ++r) {
    const auto it = std::find(vocab.begin(), vocab.end(), values[r]);
    if (it != vocab.end()) block(static_cast<Index>(r), it - vocab.begin()) = 1.0;
  }
  return block;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array kAllKinds{TransformKind::none,     TransformKind::sqrt,
                               TransformKind::log,      TransformKind::quantile,
                               TransformKind::yeo_johnson, TransformKind::box_cox};

double population_variance(std::span<const double> y) {
  const double n = static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : y) ss += (v - mean) * (v - mean);
  return ss / n;
}

double grid_lambda(int k) { return static_cast<double>(k - kLambdaSteps / 2) / 100.0; }

template <typename Likelihood>
double fit_lambda_on_grid(Likelihood&& llf) {
  double best_lambda = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= kLambdaSteps; ++k) {
    const double lambda = grid_lambda(k);
    const double value = llf(lambda);
    if (std::isfinite(value) && value > best) {
      best = value;
      best_lambda = lambda;
    }
  }
  if (!std::isfinite(best)) throw std::domain_error("lambda fit failed: no finite likelihood");
  return best_lambda;
}

void fit_quantile_knots(const Eigen::VectorXd& values, TargetTransform& params) {
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  params.quantile_values.clear();
  params.quantile_probabilities.clear();
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const double average_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    params.quantile_values.push_back(sorted[i]);
    params.quantile_probabilities.push_back((average_rank - 0.5) / n);
    i = j + 1;
  }
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + t * (ys[hi] - ys[lo]);
}

double quantile_forward(const TargetTransform& params, double x) {
  if (params.quantile_values.size() < 2) return 0.0;
  return normal_quantile(interpolate(params.quantile_values, params.quantile_probabilities, x));
}

double quantile_inverse(const TargetTransform& params, double y, bool clamp) {
  if (params.quantile_values.empty()) throw std::domain_error("quantile transform not fitted");
  if (params.quantile_values.size() == 1) return params.quantile_values.front();
  const double p = normal_cdf(y);
  const double lo = params.quantile_probabilities.front();
  const double hi = params.quantile_probabilities.back();
  constexpr double slack = 1e-12;
  if (!clamp && (p < lo - slack || p > hi + slack)) {
    throw std::domain_error("quantile inverse: value outside fitted range");
  }
  return interpolate(params.quantile_probabilities, params.quantile_values, p);
}

double box_cox_inverse(double y, double lambda, bool clamp) {
  if (lambda == 0.0) return std::exp(y);
  double t = lambda * y + 1.0;
  if (!(t > 0.0)) {
    if (!clamp) throw std::domain_error("box_cox inverse: value outside transform image");
    if (lambda > 0.0) return 0.0;
    t = std::numeric_limits<double>::min();
  }
  return std::pow(t, 1.0 / lambda);
}

double yeo_johnson_inverse(double y, double lambda, bool clamp) {
  if (y >= 0.0) {
    if (lambda == 0.0) return std::expm1(y);
    double t = lambda * y + 1.0;
    if (!(t > 0.0)) {
      if (!clamp) throw std::domain_error("yeo_johnson inverse: value outside transform image");
      t = std::numeric_limits<double>::min();
    }
    return std::pow(t, 1.0 / lambda) - 1.0;
  }
  const double mu = 2.0 - lambda;
  if (mu == 0.0) return -std::expm1(-y);
  double t = 1.0 - mu * y;
  if (!(t > 0.0)) {
    if (!clamp) throw std::domain_error("yeo_johnson inverse: value outside transform image");
    t = std::numeric_limits<double>::min();
  }
  return 1.0 - std::pow(t, 1.0 / mu);
}

double inverse_one(const TargetTransform& params, double y, bool clamp) {
  switch (params.kind) {
    case TransformKind::none:
      return y;
    case TransformKind::log:
      return std::expm1(y);
    case TransformKind::sqrt:
      if (y < 0.0) {
        if (!clamp) throw std::domain_error("sqrt inverse: negative value");
        return 0.0;
      }
      return y * y;
    case TransformKind::quantile:
      return quantile_inverse(params, y, clamp);
    case TransformKind::yeo_johnson:
      return yeo_johnson_inverse(y, params.lambda, clamp);
    case TransformKind::box_cox:
      return box_cox_inverse(y, params.lambda, clamp) - params.shift;
  }
  return y;
}

}  // namespace

std::string_view to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::none:
      return "none";
    case TransformKind::log:
      return "log";
    case TransformKind::sqrt:
      return "sqrt";
    case TransformKind::quantile:
      return "quantile";
    case TransformKind::yeo_johnson:
      return "yeo_johnson";
    case TransformKind::box_cox:
      return "box_cox";
  }
  return "none";
}

TransformKind parse_transform_kind(std::string_view name) {
  for (const auto kind : kAllKinds) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown transform '" + std::string(name) + "'");
}

std::span<const TransformKind> all_transform_kinds() { return kAllKinds; }

double box_cox(double x, double lambda) {
  if (!(x > 0.0)) throw std::domain_error("box_cox requires positive input");
  if (lambda == 0.0) return std::log(x);
  return (std::pow(x, lambda) - 1.0) / lambda;
}

double yeo_johnson(double x, double lambda) {
  if (x >= 0.0) {
    if (lambda == 0.0) return std::log1p(x);
    return (std::pow(x + 1.0, lambda) - 1.0) / lambda;
  }
  const double mu = 2.0 - lambda;
  if (mu == 0.0) return -std::log1p(-x);
  return -(std::pow(1.0 - x, mu) - 1.0) / mu;
}

double box_cox_log_likelihood(std::span<const double> positive_values, double lambda) {
  std::vector<double> y(positive_values.size());
  double log_sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = box_cox(positive_values[i], lambda);
    log_sum += std::log(positive_values[i]);
  }
  const double n = static_cast<double>(y.size());
  return (lambda - 1.0) * log_sum - 0.5 * n * std::log(population_variance(y));
}

double yeo_johnson_log_likelihood(std::span<const double> values, double lambda) {
  std::vector<double> y(values.size());
  double log_sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = yeo_johnson(values[i], lambda);
    log_sum += std::copysign(std::log1p(std::abs(values[i])), values[i]);
  }
  const double n = static_cast<double>(y.size());
  return (lambda - 1.0) * log_sum - 0.5 * n * std::log(population_variance(y));
}

TargetTransform fit_target_transform(const Eigen::VectorXd& values, TransformKind kind,
                                     std::optional<double> box_cox_shift) {
  if (values.size() == 0) throw std::invalid_argument("transform fitting needs a non-empty sample");
  TargetTransform params;
  params.kind = kind;
  switch (kind) {
    case TransformKind::box_cox: {
      if ((values.array() < 0.0).any()) {
        throw std::domain_error("box_cox requires non-negative input");
      }
      params.shift = box_cox_shift.value_or((values.array() == 0.0).any() ? 1.0 : 0.0);
      std::vector<double> shifted(static_cast<std::size_t>(values.size()));
      for (Index i = 0; i < values.size(); ++i) {
        shifted[static_cast<std::size_t>(i)] = values(i) + params.shift;
        if (!(shifted[static_cast<std::size_t>(i)] > 0.0)) {
          throw std::domain_error("box_cox requires positive shifted input");
        }
      }
      params.lambda =
          fit_lambda_on_grid([&](double l) { return box_cox_log_likelihood(shifted, l); });
      break;
    }
    case TransformKind::yeo_johnson: {
      const std::vector<double> v(values.data(), values.data() + values.size());
      params.lambda = fit_lambda_on_grid([&](double l) { return yeo_johnson_log_likelihood(v, l); });
      break;
    }
    case TransformKind::quantile:
      fit_quantile_knots(values, params);
      break;
    default:
      break;
  }
  return params;
}

std::pair<Eigen::VectorXd, TargetTransform> transform_target(const Eigen::VectorXd& values,
                                                             TransformKind kind) {
  TargetTransform params = fit_target_transform(values, kind);
  return {apply_transform(params, values), std::move(params)};
}

Eigen::VectorXd apply_transform(const TargetTransform& params, const Eigen::VectorXd& values) {
  Eigen::VectorXd out(values.size());
  for (Index i = 0; i < values.size(); ++i) {
    const double x = values(i);
    switch (params.kind) {
      case TransformKind::none:
        out(i) = x;
        break;
      case TransformKind::log:
        if (!(x > -1.0)) throw std::domain_error("log transform requires x > -1");
        out(i) = std::log1p(x);
        break;
      case TransformKind::sqrt:
        if (x < 0.0) throw std::domain_error("sqrt transform requires non-negative input");
        out(i) = std::sqrt(x);
        break;
      case TransformKind::quantile:
        out(i) = quantile_forward(params, x);
        break;
      case TransformKind::yeo_johnson:
        out(i) = yeo_johnson(x, params.lambda);
        break;
      case TransformKind::box_cox:
        out(i) = box_cox(x + params.shift, params.lambda);
        break;
    }
  }
  return out;
}

Eigen::VectorXd inverse_transform_target(const Eigen::VectorXd& transformed,
                                         const TargetTransform& params) {
  Eigen::VectorXd out(transformed.size());
  for (Index i = 0; i < transformed.size(); ++i) out(i) = inverse_one(params, transformed(i), false);
  return out;
}

Eigen::VectorXd inverse_transform_predictions(const Eigen::VectorXd& transformed,
                                              const TargetTransform& params) {
  Eigen::VectorXd out(transformed.size());
  for (Index i = 0; i < transformed.size(); ++i) {
    const double v = inverse_one(params, transformed(i), true);
    out(i) = std::isfinite(v) ? std::max(v, 0.0) : std::numeric_limits<double>::max();
  }
  return out;
}

// ---------------------------------------------------------------------------

FeatureTable apply_feature_params(const RawFeatures& raw, const FeatureParams& params) {
  if (raw.continuous.size() != params.continuous_names.size() ||
      raw.categorical.size() != params.categorical_names.size()) {
    throw DataError("feature columns do not match the fitted parameters");
  }
  const RawFeatures imputed = apply_imputation(raw, params.fills);
  const Index rows = imputed.rows();
  Index width = static_cast<Index>(imputed.continuous.size());
  for (const auto& v : params.vocabularies) width += static_cast<Index>(v.size());

  FeatureTable table;
  table.fitted = params;
  table.matrix.resize(rows, width);
  Index col = 0;
  for (std::size_t c = 0; c < imputed.continuous.size(); ++c) {
    Eigen::VectorXd column(rows);
    for (Index r = 0; r < rows; ++r) column(r) = *imputed.continuous[c].values[static_cast<std::size_t>(r)];
    table.matrix.col(col++) = minmax_scale(column, params.minimums[c], params.maximums[c]).matrix();
    table.feature_names.push_back(imputed.continuous[c].name);
  }
  for (std::size_t c = 0; c < imputed.categorical.size(); ++c) {
    std::vector<std::string> values;
    values.reserve(static_cast<std::size_t>(rows));
    for (const auto& v : imputed.categorical[c].values) values.push_back(*v);
    const auto& vocab = params.vocabularies[c];
    const Eigen::MatrixXd block = one_hot(values, vocab);
    table.matrix.middleCols(col, block.cols()) = block;
    col += block.cols();
    for (const auto& category : vocab) {
      table.feature_names.push_back(imputed.categorical[c].name + "=" + category);
    }
  }
  return table;
}

FeatureTable build_feature_table(const RawFeatures& raw, std::span<const Index> fit_rows) {
  if (fit_rows.empty()) throw DataError("feature fitting needs at least one row");
  FeatureParams params;
  params.fills = fit_imputation(raw, fit_rows);
  const RawFeatures imputed = apply_imputation(raw, params.fills);
  for (const auto& column : imputed.continuous) {
    params.continuous_names.push_back(column.name);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto r : fit_rows) {
      const double v = *column.values[static_cast<std::size_t>(r)];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    params.minimums.push_back(lo);
    params.maximums.push_back(hi);
  }
  for (const auto& column : imputed.categorical) {
    params.categorical_names.push_back(column.name);
    std::vector<std::string> values;
    values.reserve(column.values.size());
    for (const auto& v : column.values) values.push_back(*v);
    params.vocabularies.push_back(fit_vocabulary(values, fit_rows));
  }
  return apply_feature_params(raw, params);
}

TargetVector build_target_vector(const std::vector<std::optional<std::int64_t>>& aadb,
                                 std::span<const Index> fit_rows, TransformKind kind) {
  TargetVector targets;
  const Index n = static_cast<Index>(aadb.size());
  targets.aadb.resize(aadb.size(), 0);
  targets.labelled.resize(aadb.size(), false);
  for (std::size_t i = 0; i < aadb.size(); ++i) {
    if (aadb[i]) {
      targets.aadb[i] = *aadb[i];
      targets.labelled[i] = true;
    }
  }
  Eigen::VectorXd fit_values(static_cast<Index>(fit_rows.size()));
  for (std::size_t k = 0; k < fit_rows.size(); ++k) {
    const auto r = static_cast<std::size_t>(fit_rows[k]);
    if (!targets.labelled[r]) throw DataError("target fitting row " + std::to_string(r) + " is unlabelled");
    fit_values(static_cast<Index>(k)) = static_cast<double>(targets.aadb[r]);
  }
  // The Box-Cox shift must keep every labelled node inside the domain, not
  // only the fitting rows.
  std::optional<double> shift;
  if (kind == TransformKind::box_cox) {
    const bool any_zero = std::any_of(aadb.begin(), aadb.end(),
                                      [](const auto& v) { return v && *v == 0; });
    shift = any_zero ? 1.0 : 0.0;
  }
  targets.transform = fit_target_transform(fit_values, kind, shift);
  targets.transformed = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<Index> labelled_rows;
  for (Index i = 0; i < n; ++i) {
    if (targets.labelled[static_cast<std::size_t>(i)]) labelled_rows.push_back(i);
  }
  Eigen::VectorXd labelled_values(static_cast<Index>(labelled_rows.size()));
  for (std::size_t k = 0; k < labelled_rows.size(); ++k) {
    labelled_values(static_cast<Index>(k)) =
        static_cast<double>(targets.aadb[static_cast<std::size_t>(labelled_rows[k])]);
  }
  const Eigen::VectorXd mapped = apply_transform(targets.transform, labelled_values);
  for (std::size_t k = 0; k < labelled_rows.size(); ++k) {
    targets.transformed(labelled_rows[k]) = mapped(static_cast<Index>(k));
  }
  return targets;
}

}  // namespace cyclegcn
