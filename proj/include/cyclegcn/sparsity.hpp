#pragma once

#include "cyclegcn/split.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cyclegcn {

/// Seeded uniform split of the labelled nodes. Train and validation receive
/// floor(r * n) nodes each, test the remainder (15 933 -> 12 746 / 796 / 2 391).
/// Throws DataError when n < 3 or any set ends up empty.
SplitAssignment split_nodes(std::span<const Index> labelled, const SplitRatios& ratios,
                            std::uint64_t seed);

/// Either a fraction of training labels to mask, or an absolute number of
/// labels to keep.
struct SparsityLevel {
  enum class Kind { fraction, count };
  Kind kind = Kind::fraction;
  double fraction = 0.0;
  Index count = 0;

  static SparsityLevel masked_fraction(double s);
  static SparsityLevel kept_count(Index n);

  /// Labels kept out of `train_size`: floor((1 - s) * train_size) or the
  /// count itself.
  Index retained(Index train_size) const;
  /// "0.5" for fractions, "141" for counts; parse() reads the same forms.
  std::string to_string() const;
  static SparsityLevel parse(std::string_view text);

  bool operator==(const SparsityLevel&) const = default;
};

/// Uniform retention without replacement. All levels drawn with the same
/// seed are prefixes of one permutation, so lower sparsity yields a superset.
/// The result is sorted. Throws DataError when the request exceeds the
/// training set or keeps nothing.
std::vector<Index> apply_sparsity(std::span<const Index> train, const SparsityLevel& level,
                                  std::uint64_t seed);

enum class ModelKind { lr, svm, rf, gcn };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct SparsityPlan {
  std::vector<SparsityLevel> levels;
  std::vector<std::uint64_t> seeds;
  std::vector<ModelKind> models;
  std::string gcn_label = "G";
  /// Re-run the baseline grid search at every (level, seed) instead of using
  /// the tuned defaults.
  bool retune_baselines = false;

  /// Fractions strictly ascending in [0, 1), then counts strictly
  /// descending; seeds and models non-empty. Throws ConfigError.
  void validate() const;
};

/// {0, 0.2, 0.5, 0.6, 0.7, 0.8, 0.9} plus the absolute count 141.
std::vector<SparsityLevel> default_sparsity_levels();
SparsityPlan default_sparsity_plan();

}  // namespace cyclegcn
