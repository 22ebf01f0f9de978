#pragma once

#include "cyclegcn/baselines.hpp"
#include "cyclegcn/dataset.hpp"
#include "cyclegcn/report.hpp"
#include "cyclegcn/sparsity.hpp"
#include "cyclegcn/train.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cyclegcn {

struct SweepSettings {
  TrainConfig train;
  TransformKind transform = TransformKind::box_cox;
  RidgeParams ridge;
  SvrParams svr;
  ForestParams forest;
  int cv_folds = 5;
  /// Fill the wall_ms column. Off by default so reruns are byte-identical.
  bool record_wall_time = false;
};

/// One (level, model, seed) run. Metrics are in AADB units; they are empty
/// when the run failed.
struct SweepRun {
  SparsityLevel level;
  Index labelled_count = 0;
  ModelKind model = ModelKind::lr;
  std::uint64_t seed = 0;
  std::optional<Metrics> test;
  std::optional<Metrics> validation;
  double wall_ms = 0.0;
  /// "ok", or "failed: <reason>".
  std::string status = "ok";
  /// Per-epoch losses, GCN runs only.
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
};

struct SweepResult {
  std::vector<SweepRun> runs;
};

/// Per-seed preparation shared by every level and model: the split and the
/// feature table fitted on the training nodes.
struct SeedContext {
  std::uint64_t seed = 0;
  SplitAssignment split;
  FeatureTable features;
};

SeedContext prepare_seed(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed);

/// Trains and evaluates one model at one level; errors propagate. The
/// trained GCN is stored in `gcn_model` when given.
SweepRun execute_run(const Dataset& data, const NormalizedAdjacency& adjacency,
                     const SeedContext& context, const SparsityLevel& level, ModelKind model,
                     const SparsityPlan& plan, const SweepSettings& settings,
                     TrainedModel* gcn_model = nullptr);

/// As execute_run, but failures are reported in the status field.
SweepRun run_single(const Dataset& data, const NormalizedAdjacency& adjacency,
                    const SeedContext& context, const SparsityLevel& level, ModelKind model,
                    const SparsityPlan& plan, const SweepSettings& settings);

using SweepProgress = std::function<void(const SweepRun&)>;

/// Runs every (level, model, seed) of the plan in that nesting order.
SweepResult run_sweep(const Dataset& data, const SparsityPlan& plan, const SweepSettings& settings,
                      const SweepProgress& progress = {});

/// results.csv contents: a test row and a validation row per run.
std::string results_csv(const SweepResult& result, bool record_wall_time);

/// Writes results.csv and curves/<level>_<model>_<seed>.csv under `dir`.
void write_sweep_outputs(const SweepResult& result, const SweepSettings& settings,
                         const std::filesystem::path& dir);

}  // namespace cyclegcn
