#include "cyclegcn/sparsity.hpp"

#include "cyclegcn/csv.hpp"
#include "cyclegcn/errors.hpp"
#include "cyclegcn/random.hpp"

#include <algorithm>
#include <cmath>

namespace cyclegcn {

namespace {

// Absorbs representation error in products such as 0.8 * 15933 before the
// floor.
constexpr double kFloorSlack = 1e-9;

Index floor_count(double value) { return static_cast<Index>(std::floor(value + kFloorSlack)); }

}  // namespace

SplitAssignment split_nodes(std::span<const Index> labelled, const SplitRatios& ratios,
                            std::uint64_t seed) {
  const auto n = static_cast<Index>(labelled.size());
  if (n < 3) throw DataError("a split needs at least 3 labelled nodes");
  double sum = 0.0;
  for (const double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

  std::vector<Index> order(labelled.begin(), labelled.end());
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end()) {
    throw DataError("labelled node list contains duplicates");
  }
  Rng rng(seed);
  rng.shuffle(order);

  // Train and validation take floor(r * n); test takes the remainder.
  const Index train = floor_count(ratios[0] * static_cast<double>(n));
  const Index validation = floor_count(ratios[1] * static_cast<double>(n));
  const Index test = n - train - validation;
  if (validation < 1 || test < 1 || train < 1) {
    throw DataError("split of " + std::to_string(n) + " nodes leaves an empty set");
  }
  SplitAssignment split;
  const auto begin = order.begin();
  split.validation.assign(begin, begin + validation);
  split.test.assign(begin + validation, begin + validation + test);
  split.train.assign(begin + validation + test, order.end());
  for (auto* set : {&split.train, &split.validation, &split.test}) std::sort(set->begin(), set->end());
  return split;
}

SparsityLevel SparsityLevel::masked_fraction(double s) {
  if (!(s >= 0.0 && s < 1.0)) throw ConfigError("sparsity fraction must lie in [0, 1)");
  SparsityLevel level;
  level.kind = Kind::fraction;
  level.fraction = s;
  return level;
}

SparsityLevel SparsityLevel::kept_count(Index n) {
  if (n < 1) throw ConfigError("retained label count must be at least 1");
  SparsityLevel level;
  level.kind = Kind::count;
  level.count = n;
  return level;
}

Index SparsityLevel::retained(Index train_size) const {
  if (kind == Kind::count) return count;
  return floor_count((1.0 - fraction) * static_cast<double>(train_size));
}

std::string SparsityLevel::to_string() const {
  return kind == Kind::count ? std::to_string(count) : format_number(fraction);
}

SparsityLevel SparsityLevel::parse(std::string_view text) {
  const bool looks_integral = !text.empty() && text.find_first_not_of("0123456789") == std::string_view::npos;
  if (looks_integral) {
    const auto n = parse_integer(text);
    if (!n) throw ConfigError("invalid sparsity level '" + std::string(text) + "'");
    if (*n == 0) return masked_fraction(0.0);
    return kept_count(static_cast<Index>(*n));
  }
  const auto s = parse_double(text);
  if (!s) throw ConfigError("invalid sparsity level '" + std::string(text) + "'");
  return masked_fraction(*s);
}

std::vector<Index> apply_sparsity(std::span<const Index> train, const SparsityLevel& level,
                                  std::uint64_t seed) {
  const auto size = static_cast<Index>(train.size());
  const Index keep = level.retained(size);
  if (keep > size) {
    throw DataError("cannot keep " + std::to_string(keep) + " labels out of " +
                    std::to_string(size) + " training nodes");
  }
  if (keep < 1) throw DataError("sparsity level " + level.to_string() + " keeps no labels");
  std::vector<Index> order(train.begin(), train.end());
  std::sort(order.begin(), order.end());
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(static_cast<std::size_t>(keep));
  std::sort(order.begin(), order.end());
  return order;
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::lr: return "lr";
    case ModelKind::svm: return "svm";
    case ModelKind::rf: return "rf";
    case ModelKind::gcn: return "gcn";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  for (const ModelKind k : {ModelKind::lr, ModelKind::svm, ModelKind::rf, ModelKind::gcn}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown model '" + std::string(name) + "' (expected lr, svm, rf or gcn)");
}

void SparsityPlan::validate() const {
  if (levels.empty()) throw ConfigError("sparsity plan has no levels");
  if (seeds.empty()) throw ConfigError("sparsity plan has no seeds");
  if (models.empty()) throw ConfigError("sparsity plan has no models");
  bool seen_count = false;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const SparsityLevel& level = levels[i];
    if (level.kind == SparsityLevel::Kind::fraction) {
      if (!(level.fraction >= 0.0 && level.fraction < 1.0)) {
        throw ConfigError("sparsity fraction must lie in [0, 1)");
      }
      if (seen_count) throw ConfigError("fractional sparsity levels must precede count levels");
      if (i > 0 && !(levels[i - 1].fraction < level.fraction)) {
        throw ConfigError("sparsity levels must be strictly ascending");
      }
    } else {
      if (level.count < 1) throw ConfigError("retained label count must be at least 1");
      if (seen_count && !(levels[i - 1].count > level.count)) {
        throw ConfigError("count levels must be strictly descending");
      }
      seen_count = true;
    }
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (models[i] == models[j]) throw ConfigError("sparsity plan lists a model twice");
    }
  }
}

std::vector<SparsityLevel> default_sparsity_levels() {
  std::vector<SparsityLevel> levels;
  for (const double s : {0.0, 0.2, 0.5, 0.6, 0.7, 0.8, 0.9}) {
    levels.push_back(SparsityLevel::masked_fraction(s));
  }
  levels.push_back(SparsityLevel::kept_count(141));
  return levels;
}

SparsityPlan default_sparsity_plan() {
  SparsityPlan plan;
  plan.levels = default_sparsity_levels();
  plan.seeds = {42};
  plan.models = {ModelKind::lr, ModelKind::svm, ModelKind::rf, ModelKind::gcn};
  return plan;
}

}  // namespace cyclegcn
