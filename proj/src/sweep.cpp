#include "cyclegcn/sweep.hpp"

#include "cyclegcn/csv.hpp"
#include "cyclegcn/errors.hpp"
#include "cyclegcn/serialize.hpp"

#include <algorithm>
#include <chrono>

namespace cyclegcn {

namespace {

// Seed streams derived from each master seed.
constexpr std::uint64_t kSplitStream = 100;
constexpr std::uint64_t kMaskStream = 101;
constexpr std::uint64_t kTrainStream = 102;
constexpr std::uint64_t kBaselineStream = 103;

std::string sanitize(std::string text) {
  for (char& c : text) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return text;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& x, const std::vector<Index>& rows) {
  return x(rows, Eigen::all);
}

}  // namespace

SeedContext prepare_seed(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed) {
  SeedContext context;
  context.seed = seed;
  context.split = split_nodes(data.labelled_nodes(), ratios, derive_seed(seed, kSplitStream));
  context.features = build_feature_table(data.features, context.split.train);
  return context;
}

SweepRun execute_run(const Dataset& data, const NormalizedAdjacency& adjacency,
                     const SeedContext& context, const SparsityLevel& level, ModelKind model,
                     const SparsityPlan& plan, const SweepSettings& settings,
                     TrainedModel* gcn_model) {
  SweepRun run;
  run.level = level;
  run.model = model;
  run.seed = context.seed;
  const auto start = std::chrono::steady_clock::now();
  {
    const auto train_size = static_cast<Index>(context.split.train.size());
    run.labelled_count = std::min(level.retained(train_size), train_size);
    SplitAssignment masked = context.split;
    masked.train = apply_sparsity(context.split.train, level, derive_seed(context.seed, kMaskStream));
    const TargetVector targets = build_target_vector(data.aadb, masked.train, settings.transform);
    const Eigen::MatrixXd& x = context.features.matrix;

    Eigen::VectorXd predicted;
    if (model == ModelKind::gcn) {
      TrainConfig tc = settings.train;
      tc.seed = derive_seed(context.seed, kTrainStream);
      const ModelConfig config = config_catalog(plan.gcn_label, x.cols(), tc.dropout_p);
      const TrainedModel trained = train(adjacency, x, targets, masked, config, tc);
      predicted = predict_aadb(trained, adjacency, x);
      run.train_loss = trained.train_loss;
      run.validation_loss = trained.validation_loss;
      if (gcn_model) *gcn_model = trained;
    } else {
      const BaselineFamily family = model == ModelKind::lr    ? BaselineFamily::ridge
                                    : model == ModelKind::svm ? BaselineFamily::svr
                                                              : BaselineFamily::forest;
      BaselineParams params = family == BaselineFamily::ridge ? BaselineParams(settings.ridge)
                              : family == BaselineFamily::svr ? BaselineParams(settings.svr)
                                                              : BaselineParams(settings.forest);
      const Eigen::MatrixXd train_x = rows_of(x, masked.train);
      const Eigen::VectorXd train_y = gather(targets.transformed, masked.train);
      const std::uint64_t seed = derive_seed(context.seed, kBaselineStream);
      if (plan.retune_baselines && train_x.rows() >= settings.cv_folds) {
        GridSearchSpec search{family, default_grid(family), settings.cv_folds, seed};
        params = grid_search_cv(search, train_x, train_y).best;
      }
      const BaselineModel fitted = BaselineModel::fit(params, train_x, train_y, seed);
      predicted = inverse_transform_predictions(fitted.predict(x), targets.transform);
    }
    run.test = compute_metrics(aadb_at(targets, masked.test), gather(predicted, masked.test));
    run.validation =
        compute_metrics(aadb_at(targets, masked.validation), gather(predicted, masked.validation));
  }
  run.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return run;
}

SweepRun run_single(const Dataset& data, const NormalizedAdjacency& adjacency,
                    const SeedContext& context, const SparsityLevel& level, ModelKind model,
                    const SparsityPlan& plan, const SweepSettings& settings) {
  const auto start = std::chrono::steady_clock::now();
  try {
    return execute_run(data, adjacency, context, level, model, plan, settings);
  } catch (const std::exception& e) {
    SweepRun run;
    run.level = level;
    run.model = model;
    run.seed = context.seed;
    const auto train_size = static_cast<Index>(context.split.train.size());
    run.labelled_count = std::min(level.retained(train_size), train_size);
    run.status = "failed: " + sanitize(e.what());
    run.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return run;
  }
}

SweepResult run_sweep(const Dataset& data, const SparsityPlan& plan, const SweepSettings& settings,
                      const SweepProgress& progress) {
  plan.validate();
  settings.train.validate();
  const NormalizedAdjacency adjacency = normalize(data.graph);
  std::vector<SeedContext> contexts;
  contexts.reserve(plan.seeds.size());
  for (const std::uint64_t seed : plan.seeds) {
    contexts.push_back(prepare_seed(data, settings.train.split_ratios, seed));
  }
  SweepResult result;
  for (const SparsityLevel& level : plan.levels) {
    for (const ModelKind model : plan.models) {
      for (const SeedContext& context : contexts) {
        result.runs.push_back(run_single(data, adjacency, context, level, model, plan, settings));
        if (progress) progress(result.runs.back());
      }
    }
  }
  return result;
}

std::string results_csv(const SweepResult& result, bool record_wall_time) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const SweepRun& run : result.runs) {
    const std::pair<const char*, const std::optional<Metrics>*> splits[] = {
        {"test", &run.test}, {"validation", &run.validation}};
    for (const auto& [name, metrics] : splits) {
      std::vector<std::string> row{run.level.to_string(), std::to_string(run.labelled_count),
                                   std::string(to_string(run.model)), std::to_string(run.seed),
                                   name};
      if (*metrics) {
        const Metrics& m = **metrics;
        row.push_back(format_number(m.rmse));
        row.push_back(format_number(m.mse));
        row.push_back(format_number(m.mae));
        row.push_back(m.mape ? format_number(*m.mape) : std::string());
        row.push_back(std::to_string(m.excluded_zero_targets));
      } else {
        row.insert(row.end(), {"", "", "", "", ""});
      }
      row.push_back(record_wall_time ? format_fixed(run.wall_ms, 1) : std::string());
      row.push_back(run.status);
      out += join_csv(row) + "\n";
    }
  }
  return out;
}

void write_sweep_outputs(const SweepResult& result, const SweepSettings& settings,
                         const std::filesystem::path& dir) {
  const auto curves = dir / "curves";
  std::filesystem::create_directories(curves);
  write_text_file(dir / "results.csv", results_csv(result, settings.record_wall_time));
  for (const SweepRun& run : result.runs) {
    if (run.model != ModelKind::gcn || run.train_loss.empty()) continue;
    TrainedModel losses;
    losses.train_loss = run.train_loss;
    losses.validation_loss = run.validation_loss;
    const std::string name = run.level.to_string() + "_" + std::string(to_string(run.model)) + "_" +
                             std::to_string(run.seed) + ".csv";
    write_text_file(curves / name, loss_curve_csv(losses));
  }
}

}  // namespace cyclegcn
