#pragma once

#include "cyclegcn/baselines.hpp"
#include "cyclegcn/serialize.hpp"
#include "cyclegcn/sparsity.hpp"
#include "cyclegcn/synthetic.hpp"
#include "cyclegcn/train.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cyclegcn {

/// Baseline grids given as per-hyperparameter value lists; the grid is their
/// Cartesian product.
struct GridConfig {
  std::vector<double> alpha{1e-4, 1e-3, 1e-2, 0.1, 1.0};
  std::vector<double> c{0.1, 1.0, 10.0, 100.0};
  std::vector<double> gamma{1e-3, 1e-2, 0.1, 1.0};
  std::vector<double> epsilon{0.1};
  std::vector<int> n_estimators{100, 400, 1000};
  std::vector<std::optional<int>> max_depth{3, 5, 10, 20, std::nullopt};
  std::vector<int> min_samples_split{2, 10};
  std::vector<int> min_samples_leaf{1, 5};

  std::vector<BaselineParams> expand(BaselineFamily family) const;
};

/// Every tunable of a run. Parsed from one JSON document; unknown keys are
/// rejected and every default is echoed into the manifest.
struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::filesystem::path out = "out";

  // Input data: CSV paths, or a synthetic city when `nodes` is empty.
  std::optional<std::filesystem::path> nodes;
  std::optional<std::filesystem::path> edges;
  std::optional<std::filesystem::path> counts;
  FeatureSchema schema;
  SyntheticParams synthetic;
  /// City seed; the master seed when empty.
  std::optional<std::uint64_t> synthetic_seed;

  TransformKind transform = TransformKind::box_cox;
  ModelKind model = ModelKind::gcn;
  std::string gcn_config = "G";
  /// Training-label sparsity for `train` and `grid-search`.
  SparsityLevel level;

  TrainConfig train;
  RidgeParams ridge;
  SvrParams svr;
  ForestParams forest;
  int cv_folds = 5;
  GridConfig grid;

  SparsityPlan plan = default_sparsity_plan();
  bool record_wall_time = false;
};

/// Accepts either a config object or a manifest ({"command", "config"}).
/// Throws ConfigError on unknown keys, wrong types or invalid values.
ExperimentConfig parse_experiment_config(const Json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
Json to_json(const ExperimentConfig& config);

/// Holds `<dir>/.lock` for its lifetime. Throws std::runtime_error if the
/// lock already exists.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Dataset named by the config: loaded from CSVs or generated.
Dataset resolve_dataset(const ExperimentConfig& config);

void cmd_synth(const ExperimentConfig& config, std::ostream& log);
void cmd_preprocess(const ExperimentConfig& config, std::ostream& log);
void cmd_train(const ExperimentConfig& config, std::ostream& log);
/// `model` empty runs every family plus the GCN label comparison.
void cmd_grid_search(const ExperimentConfig& config, std::optional<ModelKind> model,
                     std::ostream& log);
void cmd_sweep(const ExperimentConfig& config, std::ostream& log);
void cmd_report(const std::filesystem::path& results, const std::filesystem::path& out,
                std::ostream& log);

/// Skewness of the sample under every transform kind, in report order.
std::vector<std::pair<TransformKind, double>> skewness_table(const Eigen::VectorXd& values);

/// Entry point. Exit codes: 0 success, 1 usage or configuration error,
/// 2 data error, 3 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cyclegcn
