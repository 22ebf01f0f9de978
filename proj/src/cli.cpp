#include "cyclegcn/cli.hpp"

#include "cyclegcn/csv.hpp"
#include "cyclegcn/errors.hpp"
#include "cyclegcn/report.hpp"
#include "cyclegcn/sweep.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <set>

namespace cyclegcn {

namespace {

// Extra seed streams used only by the CLI.
constexpr std::uint64_t kGridStream = 104;

// ---------------------------------------------------------------------------
// Strict JSON reading

class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  /// True when the key is present, even if null.
  bool present(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const Json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void read(const std::string& key, T& target) {
    if (!has(key)) return;
    try {
      target = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + ": wrong type " + j_.at(key).dump());
    }
  }

  void read_seed(const std::string& key, std::uint64_t& target) {
    if (!has(key)) return;
    if (!j_.at(key).is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
    target = j_.at(key).get<std::uint64_t>();
  }

  void read_path(const std::string& key, std::optional<std::filesystem::path>& target) {
    std::string value;
    if (!has(key)) return;
    read(key, value);
    target = value;
  }

  std::string where(const std::string& key = {}) const {
    return key.empty() ? path_ : path_ + "." + key;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key " + where(item.key()));
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

SparsityLevel level_from_json(const Json& j, const std::string& where) {
  if (j.is_string()) return SparsityLevel::parse(j.get<std::string>());
  if (j.is_number_integer()) {
    const auto n = j.get<long long>();
    if (n == 0) return SparsityLevel::masked_fraction(0.0);
    if (n < 0) throw ConfigError(where + ": sparsity level must be non-negative");
    return SparsityLevel::kept_count(static_cast<Index>(n));
  }
  if (j.is_number()) return SparsityLevel::masked_fraction(j.get<double>());
  throw ConfigError(where + ": sparsity level must be a number or string");
}

Json level_json(const SparsityLevel& level) {
  if (level.kind == SparsityLevel::Kind::count) return Json(level.count);
  return Json(level.fraction);
}

Json optional_depth(const std::optional<int>& depth) { return depth ? Json(*depth) : Json(); }

std::optional<int> depth_from_json(const Json& j, const std::string& where) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_number_integer()) throw ConfigError(where + ": max_depth must be an integer or null");
  return j.get<int>();
}

template <typename T>
void require_non_empty(const std::vector<T>& values, const std::string& name) {
  if (values.empty()) throw ConfigError("grid list " + name + " is empty");
}

// ---------------------------------------------------------------------------
// Output helpers

void write_manifest(const std::filesystem::path& dir, std::string_view command,
                    const ExperimentConfig& config) {
  Json manifest{{"command", std::string(command)}, {"config", to_json(config)}};
  write_text_file(dir / "manifest.json", dump_json(manifest));
}

std::filesystem::path prepare_output(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

SweepSettings settings_of(const ExperimentConfig& config) {
  SweepSettings settings;
  settings.train = config.train;
  settings.train.seed = config.seed;
  settings.transform = config.transform;
  settings.ridge = config.ridge;
  settings.svr = config.svr;
  settings.forest = config.forest;
  settings.cv_folds = config.cv_folds;
  settings.record_wall_time = config.record_wall_time;
  return settings;
}

SparsityPlan plan_of(const ExperimentConfig& config) {
  SparsityPlan plan = config.plan;
  plan.gcn_label = config.gcn_config;
  return plan;
}

std::string metrics_line(const Metrics& m) {
  std::string line = "rmse=" + format_fixed(m.rmse, 4) + " mae=" + format_fixed(m.mae, 4) +
                     " mape=" + (m.mape ? format_fixed(*m.mape, 2) + "%" : std::string("n/a"));
  return line + " n=" + std::to_string(m.count);
}

BaselineFamily family_of_model(ModelKind model) {
  switch (model) {
    case ModelKind::lr: return BaselineFamily::ridge;
    case ModelKind::svm: return BaselineFamily::svr;
    case ModelKind::rf: return BaselineFamily::forest;
    case ModelKind::gcn: break;
  }
  throw ConfigError("the GCN is not a baseline family");
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::vector<BaselineParams> GridConfig::expand(BaselineFamily family) const {
  std::vector<BaselineParams> grid;
  switch (family) {
    case BaselineFamily::ridge:
      require_non_empty(alpha, "alpha");
      for (const double a : alpha) grid.emplace_back(RidgeParams{a});
      break;
    case BaselineFamily::svr:
      require_non_empty(c, "C");
      require_non_empty(gamma, "gamma");
      require_non_empty(epsilon, "epsilon");
      for (const double cv : c) {
        for (const double g : gamma) {
          for (const double e : epsilon) grid.emplace_back(SvrParams{cv, g, e});
        }
      }
      break;
    case BaselineFamily::forest:
      require_non_empty(n_estimators, "n_estimators");
      require_non_empty(max_depth, "max_depth");
      require_non_empty(min_samples_split, "min_samples_split");
      require_non_empty(min_samples_leaf, "min_samples_leaf");
      for (const int n : n_estimators) {
        for (const auto& d : max_depth) {
          for (const int split : min_samples_split) {
            for (const int leaf : min_samples_leaf) grid.emplace_back(ForestParams{n, d, split, leaf, true});
          }
        }
      }
      break;
  }
  return grid;
}

ExperimentConfig parse_experiment_config(const Json& input) {
  const Json* root = &input;
  if (input.is_object() && input.contains("command") && input.contains("config")) {
    ObjectReader manifest(input, "manifest");
    manifest.at("command");
    root = &manifest.at("config");
    manifest.finish();
  }
  ExperimentConfig config;
  ObjectReader r(*root, "config");
  r.read_seed("seed", config.seed);
  if (r.has("out")) config.out = r.at("out").get<std::string>();

  if (r.has("data")) {
    ObjectReader d(r.at("data"), "data");
    d.read_path("nodes", config.nodes);
    d.read_path("edges", config.edges);
    d.read_path("counts", config.counts);
    d.read("continuous", config.schema.continuous);
    d.read("categorical", config.schema.categorical);
    d.finish();
  }
  if (r.has("synthetic")) {
    ObjectReader s(r.at("synthetic"), "synthetic");
    SyntheticParams& p = config.synthetic;
    s.read("n_nodes", p.n_nodes);
    if (s.has("graph")) p.family = parse_graph_family(s.at("graph").get<std::string>());
    s.read("mean_degree", p.mean_degree);
    s.read("diffusion_depth", p.diffusion_depth);
    s.read("noise_sigma", p.noise_sigma);
    s.read("signal_scale", p.signal_scale);
    s.read("base_intensity", p.base_intensity);
    s.read("days", p.days);
    s.read("labelled_fraction", p.labelled_fraction);
    s.read("missing_rate", p.missing_rate);
    if (s.has("seed")) {
      std::uint64_t seed = 0;
      s.read_seed("seed", seed);
      config.synthetic_seed = seed;
    }
    s.finish();
  }
  if (r.has("transform")) config.transform = parse_transform_kind(r.at("transform").get<std::string>());
  if (r.has("model")) config.model = parse_model_kind(r.at("model").get<std::string>());
  r.read("gcn_config", config.gcn_config);
  if (r.has("level")) config.level = level_from_json(r.at("level"), "config.level");

  if (r.has("train")) {
    ObjectReader t(r.at("train"), "train");
    TrainConfig& tc = config.train;
    t.read("learning_rate", tc.learning_rate);
    t.read("weight_decay", tc.weight_decay);
    t.read("max_epochs", tc.max_epochs);
    t.read("dropout", tc.dropout_p);
    t.read("patience", tc.patience);
    t.read("min_delta", tc.min_delta);
    t.read("eval_interval", tc.eval_interval);
    t.read("early_stopping", tc.early_stopping);
    t.read("batch_norm_momentum", tc.batch_norm_momentum);
    if (t.has("split_ratios")) {
      std::vector<double> ratios;
      t.read("split_ratios", ratios);
      if (ratios.size() != 3) throw ConfigError("train.split_ratios needs three values");
      std::copy(ratios.begin(), ratios.end(), tc.split_ratios.begin());
    }
    t.finish();
  }
  if (r.has("baselines")) {
    ObjectReader b(r.at("baselines"), "baselines");
    if (b.has("lr")) {
      ObjectReader lr(b.at("lr"), "baselines.lr");
      lr.read("alpha", config.ridge.alpha);
      lr.finish();
    }
    if (b.has("svm")) {
      ObjectReader svm(b.at("svm"), "baselines.svm");
      svm.read("C", config.svr.c);
      svm.read("gamma", config.svr.gamma);
      svm.read("epsilon", config.svr.epsilon);
      svm.finish();
    }
    if (b.has("rf")) {
      ObjectReader rf(b.at("rf"), "baselines.rf");
      rf.read("n_estimators", config.forest.n_estimators);
      if (rf.present("max_depth")) {
        config.forest.max_depth = depth_from_json(rf.at("max_depth"), "baselines.rf.max_depth");
      }
      rf.read("min_samples_split", config.forest.min_samples_split);
      rf.read("min_samples_leaf", config.forest.min_samples_leaf);
      rf.read("bootstrap", config.forest.bootstrap);
      rf.finish();
    }
    b.read("cv_folds", config.cv_folds);
    if (b.has("grids")) {
      ObjectReader g(b.at("grids"), "baselines.grids");
      GridConfig& grid = config.grid;
      if (g.has("lr")) {
        ObjectReader lr(g.at("lr"), "baselines.grids.lr");
        lr.read("alpha", grid.alpha);
        lr.finish();
      }
      if (g.has("svm")) {
        ObjectReader svm(g.at("svm"), "baselines.grids.svm");
        svm.read("C", grid.c);
        svm.read("gamma", grid.gamma);
        svm.read("epsilon", grid.epsilon);
        svm.finish();
      }
      if (g.has("rf")) {
        ObjectReader rf(g.at("rf"), "baselines.grids.rf");
        rf.read("n_estimators", grid.n_estimators);
        if (rf.has("max_depth")) {
          const Json& depths = rf.at("max_depth");
          if (!depths.is_array()) throw ConfigError("baselines.grids.rf.max_depth must be a list");
          grid.max_depth.clear();
          for (const auto& d : depths) grid.max_depth.push_back(depth_from_json(d, "baselines.grids.rf.max_depth"));
        }
        rf.read("min_samples_split", grid.min_samples_split);
        rf.read("min_samples_leaf", grid.min_samples_leaf);
        rf.finish();
      }
      g.finish();
    }
    b.finish();
  }
  if (r.has("sweep")) {
    ObjectReader s(r.at("sweep"), "sweep");
    if (s.has("levels")) {
      const Json& levels = s.at("levels");
      if (!levels.is_array()) throw ConfigError("sweep.levels must be a list");
      config.plan.levels.clear();
      for (const auto& l : levels) config.plan.levels.push_back(level_from_json(l, "sweep.levels"));
    }
    if (s.has("seeds")) {
      const Json& seeds = s.at("seeds");
      if (!seeds.is_array()) throw ConfigError("sweep.seeds must be a list");
      config.plan.seeds.clear();
      for (const auto& seed : seeds) {
        if (!seed.is_number_unsigned()) throw ConfigError("sweep.seeds must be non-negative integers");
        config.plan.seeds.push_back(seed.get<std::uint64_t>());
      }
    }
    if (s.has("models")) {
      std::vector<std::string> names;
      s.read("models", names);
      config.plan.models.clear();
      for (const auto& name : names) config.plan.models.push_back(parse_model_kind(name));
    }
    s.read("retune_baselines", config.plan.retune_baselines);
    s.read("record_wall_time", config.record_wall_time);
    s.finish();
  }
  r.finish();

  // Cross-field checks.
  const auto labels = catalog_labels();
  if (std::find(labels.begin(), labels.end(), config.gcn_config) == labels.end()) {
    throw ConfigError("unknown GCN configuration '" + config.gcn_config + "' (expected A..J)");
  }
  const int with_paths = config.nodes.has_value() + config.edges.has_value() + config.counts.has_value();
  if (with_paths != 0 && with_paths != 3) {
    throw ConfigError("data.nodes, data.edges and data.counts must be given together");
  }
  if (config.cv_folds < 2) throw ConfigError("baselines.cv_folds must be at least 2");
  config.train.validate();
  config.plan.gcn_label = config.gcn_config;
  config.plan.validate();
  return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_experiment_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Json to_json(const ExperimentConfig& c) {
  const auto path_json = [](const std::optional<std::filesystem::path>& p) {
    return p ? Json(p->string()) : Json();
  };
  Json levels = Json::array();
  for (const auto& level : c.plan.levels) levels.push_back(level_json(level));
  Json models = Json::array();
  for (const auto model : c.plan.models) models.push_back(std::string(to_string(model)));
  Json depths = Json::array();
  for (const auto& d : c.grid.max_depth) depths.push_back(optional_depth(d));
  const TrainConfig& t = c.train;
  const SyntheticParams& s = c.synthetic;
  return Json{
      {"seed", c.seed},
      {"out", c.out.string()},
      {"data",
       {{"nodes", path_json(c.nodes)},
        {"edges", path_json(c.edges)},
        {"counts", path_json(c.counts)},
        {"continuous", c.schema.continuous},
        {"categorical", c.schema.categorical}}},
      {"synthetic",
       {{"n_nodes", s.n_nodes},
        {"graph", std::string(to_string(s.family))},
        {"mean_degree", s.mean_degree},
        {"diffusion_depth", s.diffusion_depth},
        {"noise_sigma", s.noise_sigma},
        {"signal_scale", s.signal_scale},
        {"base_intensity", s.base_intensity},
        {"days", s.days},
        {"labelled_fraction", s.labelled_fraction},
        {"missing_rate", s.missing_rate},
        {"seed", c.synthetic_seed.value_or(c.seed)}}},
      {"transform", std::string(to_string(c.transform))},
      {"model", std::string(to_string(c.model))},
      {"gcn_config", c.gcn_config},
      {"level", level_json(c.level)},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"weight_decay", t.weight_decay},
        {"max_epochs", t.max_epochs},
        {"dropout", t.dropout_p},
        {"patience", t.patience},
        {"min_delta", t.min_delta},
        {"eval_interval", t.eval_interval},
        {"early_stopping", t.early_stopping},
        {"batch_norm_momentum", t.batch_norm_momentum},
        {"split_ratios", t.split_ratios}}},
      {"baselines",
       {{"lr", {{"alpha", c.ridge.alpha}}},
        {"svm", {{"C", c.svr.c}, {"gamma", c.svr.gamma}, {"epsilon", c.svr.epsilon}}},
        {"rf",
         {{"n_estimators", c.forest.n_estimators},
          {"max_depth", optional_depth(c.forest.max_depth)},
          {"min_samples_split", c.forest.min_samples_split},
          {"min_samples_leaf", c.forest.min_samples_leaf},
          {"bootstrap", c.forest.bootstrap}}},
        {"cv_folds", c.cv_folds},
        {"grids",
         {{"lr", {{"alpha", c.grid.alpha}}},
          {"svm", {{"C", c.grid.c}, {"gamma", c.grid.gamma}, {"epsilon", c.grid.epsilon}}},
          {"rf",
           {{"n_estimators", c.grid.n_estimators},
            {"max_depth", depths},
            {"min_samples_split", c.grid.min_samples_split},
            {"min_samples_leaf", c.grid.min_samples_leaf}}}}}}},
      {"sweep",
       {{"levels", levels},
        {"seeds", c.plan.seeds},
        {"models", models},
        {"retune_baselines", c.plan.retune_baselines},
        {"record_wall_time", c.record_wall_time}}},
  };
}

// ---------------------------------------------------------------------------
// Lock

DirectoryLock::DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) {
    if (errno == EEXIST) {
      throw std::runtime_error("output directory " + dir.string() +
                               " is in use (remove " + path_.string() + " if no run is active)");
    }
    throw std::runtime_error("cannot create " + path_.string() + ": " + std::strerror(errno));
  }
  std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// Commands

Dataset resolve_dataset(const ExperimentConfig& config) {
  if (config.nodes) {
    return load_dataset(DatasetPaths{*config.nodes, *config.edges, *config.counts}, config.schema);
  }
  return generate_synthetic_city(config.synthetic, config.synthetic_seed.value_or(config.seed)).to_dataset();
}

std::vector<std::pair<TransformKind, double>> skewness_table(const Eigen::VectorXd& values) {
  std::vector<std::pair<TransformKind, double>> table;
  for (const TransformKind kind : all_transform_kinds()) {
    double value = std::numeric_limits<double>::quiet_NaN();
    try {
      value = skewness(transform_target(values, kind).first);
    } catch (const std::domain_error&) {
    }
    table.emplace_back(kind, value);
  }
  return table;
}

void cmd_synth(const ExperimentConfig& config, std::ostream& log) {
  config.synthetic.validate();
  const auto dir = prepare_output(config.out);
  DirectoryLock lock(dir);
  write_manifest(dir, "synth", config);
  const std::uint64_t seed = config.synthetic_seed.value_or(config.seed);
  const SyntheticCity city = generate_synthetic_city(config.synthetic, seed);
  write_synthetic_city(city, dir);
  std::size_t labelled = 0;
  for (const auto& series : city.counts) labelled += !series.empty();
  log << "synthetic city: " << city.graph.node_count() << " segments, " << city.graph.edge_count()
      << " edges, " << labelled << " with counts -> " << dir.string() << "\n";
}

void cmd_preprocess(const ExperimentConfig& config, std::ostream& log) {
  const auto dir = prepare_output(config.out);
  DirectoryLock lock(dir);
  write_manifest(dir, "preprocess", config);
  const Dataset data = resolve_dataset(config);
  const SeedContext context = prepare_seed(data, config.train.split_ratios, config.seed);
  const FeatureTable& table = context.features;
  const TargetVector targets = build_target_vector(data.aadb, context.split.train, config.transform);

  // Feature matrix.
  std::vector<std::string> header{"segment_id"};
  header.insert(header.end(), table.feature_names.begin(), table.feature_names.end());
  std::string features = join_csv(header) + "\n";
  for (Index i = 0; i < table.matrix.rows(); ++i) {
    std::vector<std::string> row{data.graph.node_ids[static_cast<std::size_t>(i)]};
    for (Index c = 0; c < table.matrix.cols(); ++c) row.push_back(format_number(table.matrix(i, c)));
    features += join_csv(row) + "\n";
  }
  write_text_file(dir / "features.csv", features);

  // Targets and split membership.
  std::vector<std::string> membership(data.aadb.size(), "unlabelled");
  for (const Index i : context.split.train) membership[static_cast<std::size_t>(i)] = "train";
  for (const Index i : context.split.validation) membership[static_cast<std::size_t>(i)] = "validation";
  for (const Index i : context.split.test) membership[static_cast<std::size_t>(i)] = "test";
  std::string target_csv = "segment_id,aadb,set,transformed\n";
  for (std::size_t i = 0; i < data.aadb.size(); ++i) {
    target_csv += join_csv({data.graph.node_ids[i], data.aadb[i] ? std::to_string(*data.aadb[i]) : "",
                            membership[i],
                            targets.labelled[i] ? format_number(targets.transformed(static_cast<Index>(i))) : ""});
    target_csv += "\n";
  }
  write_text_file(dir / "targets.csv", target_csv);

  TransformParams params{table.fitted, targets.transform};
  write_text_file(dir / "transform_params.json", dump_json(to_json(params)));

  // Skewness of the training targets under each transform.
  const Eigen::VectorXd train_aadb = aadb_at(targets, context.split.train);
  const auto skew = skewness_table(train_aadb);
  std::vector<std::string> names;
  std::vector<std::string> values;
  for (const auto& [kind, value] : skew) {
    names.emplace_back(kind == TransformKind::none ? "raw" : std::string(to_string(kind)));
    values.push_back(format_number(value));
  }
  write_text_file(dir / "skewness.csv", join_csv(names) + "\n" + join_csv(values) + "\n");
  std::string md = "|";
  std::string rule = "|";
  std::string cells = "|";
  for (std::size_t k = 0; k < names.size(); ++k) {
    md += " " + names[k] + " |";
    rule += "---|";
    cells += " " + format_fixed(skew[k].second, 3) + " |";
  }
  write_text_file(dir / "skewness.md", md + "\n" + rule + "\n" + cells + "\n");

  log << "features: " << table.matrix.rows() << " x " << table.matrix.cols() << "; labelled "
      << data.labelled_nodes().size() << " (train " << context.split.train.size() << ", validation "
      << context.split.validation.size() << ", test " << context.split.test.size() << ")\n";
  log << md << "\n" << rule << "\n" << cells << "\n";
}

void cmd_train(const ExperimentConfig& config, std::ostream& log) {
  const auto dir = prepare_output(config.out);
  DirectoryLock lock(dir);
  write_manifest(dir, "train", config);
  const Dataset data = resolve_dataset(config);
  const SweepSettings settings = settings_of(config);
  const SparsityPlan plan = plan_of(config);
  const NormalizedAdjacency adjacency = normalize(data.graph);
  const SeedContext context = prepare_seed(data, settings.train.split_ratios, config.seed);
  TrainedModel model;
  const SweepRun run =
      execute_run(data, adjacency, context, config.level, config.model, plan, settings, &model);

  Json metrics{{"model", std::string(to_string(run.model))},
               {"level", run.level.to_string()},
               {"labelled_count", run.labelled_count},
               {"seed", run.seed},
               {"test", to_json(*run.test)},
               {"validation", to_json(*run.validation)}};
  if (config.model == ModelKind::gcn) {
    metrics["gcn_config"] = config.gcn_config;
    metrics["stopped_epoch"] = model.stopped_epoch;
    metrics["best_epoch"] = model.best_epoch;
    save_model(model, dir / "model.json");
    write_text_file(dir / "loss_curve.csv", loss_curve_csv(model));
    Json snapshots = Json::array();
    for (const auto& s : model.snapshots) {
      snapshots.push_back(Json{{"epoch", s.epoch}, {"train", to_json(s.train)}, {"validation", to_json(s.validation)}});
    }
    metrics["snapshots"] = std::move(snapshots);
  } else {
    const BaselineFamily family = family_of_model(config.model);
    const BaselineParams params = family == BaselineFamily::ridge ? BaselineParams(config.ridge)
                                  : family == BaselineFamily::svr ? BaselineParams(config.svr)
                                                                  : BaselineParams(config.forest);
    metrics["params"] = Json::parse(params_json(params));
  }
  write_text_file(dir / "metrics.json", dump_json(metrics));
  log << to_string(run.model) << (config.model == ModelKind::gcn ? " " + config.gcn_config : "")
      << " level " << run.level.to_string() << " (" << run.labelled_count << " labels)\n";
  if (config.model == ModelKind::gcn) {
    log << "stopped at epoch " << model.stopped_epoch << ", best epoch " << model.best_epoch << "\n";
  }
  log << "test:       " << metrics_line(*run.test) << "\n";
  log << "validation: " << metrics_line(*run.validation) << "\n";
}

void cmd_grid_search(const ExperimentConfig& config, std::optional<ModelKind> model,
                     std::ostream& log) {
  const auto dir = prepare_output(config.out);
  DirectoryLock lock(dir);
  write_manifest(dir, "grid-search", config);
  const Dataset data = resolve_dataset(config);
  const SweepSettings settings = settings_of(config);
  const SeedContext context = prepare_seed(data, settings.train.split_ratios, config.seed);

  std::vector<ModelKind> models;
  if (model) models.push_back(*model);
  else models = {ModelKind::lr, ModelKind::svm, ModelKind::rf, ModelKind::gcn};

  std::vector<Index> train_rows =
      apply_sparsity(context.split.train, config.level, derive_seed(config.seed, 101));
  const TargetVector targets = build_target_vector(data.aadb, train_rows, config.transform);
  const Eigen::MatrixXd train_x = context.features.matrix(train_rows, Eigen::all);
  const Eigen::VectorXd train_y = gather(targets.transformed, train_rows);

  Json best = Json::object();
  std::string scores = "model,params_json,fold,rmse\n";
  bool any_baseline = false;
  for (const ModelKind kind : models) {
    if (kind == ModelKind::gcn) continue;
    any_baseline = true;
    const BaselineFamily family = family_of_model(kind);
    GridSearchSpec search{family, config.grid.expand(family), config.cv_folds,
                        derive_seed(config.seed, kGridStream)};
    log << "grid search " << to_string(kind) << ": " << search.grid.size() << " points x "
        << search.folds << " folds\n";
    const GridSearchResult result = grid_search_cv(search, train_x, train_y);
    for (const CvScore& s : result.scores) {
      scores += join_csv({std::string(to_string(kind)), params_json(search.grid[s.grid_index]),
                          std::to_string(s.fold), format_number(s.rmse)});
      scores += "\n";
    }
    best[std::string(to_string(kind))] =
        Json{{"params", Json::parse(params_json(result.best))},
             {"mean_cv_rmse", result.mean_rmse[result.best_index]}};
    log << "  best " << params_json(result.best) << " mean cv rmse "
        << format_fixed(result.mean_rmse[result.best_index], 4) << "\n";
  }
  if (any_baseline) write_text_file(dir / "cv_scores.csv", scores);

  if (std::find(models.begin(), models.end(), ModelKind::gcn) != models.end()) {
    const NormalizedAdjacency adjacency = normalize(data.graph);
    std::string csv = "label,early_stopping,test_rmse,validation_rmse,stopped_epoch,best_epoch,status\n";
    std::string md = "| config | RMSE without early stopping | RMSE with early stopping |\n|---|---|---|\n";
    for (const auto label : catalog_labels()) {
      std::string cells[2];
      for (const bool early : {false, true}) {
        SweepSettings arm = settings;
        arm.train.early_stopping = early;
        SparsityPlan plan;
        plan.gcn_label = std::string(label);
        TrainedModel trained;
        const SweepRun run = [&] {
          try {
            return execute_run(data, adjacency, context, config.level, ModelKind::gcn, plan, arm, &trained);
          } catch (const std::exception& e) {
            SweepRun failed;
            failed.status = "failed: " + std::string(e.what());
            return failed;
          }
        }();
        std::string status = run.status;
        std::replace(status.begin(), status.end(), ',', ';');
        const std::string test = run.test ? format_number(run.test->rmse) : "";
        const std::string val = run.validation ? format_number(run.validation->rmse) : "";
        csv += join_csv({std::string(label), early ? "true" : "false", test, val,
                         run.test ? std::to_string(trained.stopped_epoch) : "",
                         run.test ? std::to_string(trained.best_epoch) : "", status});
        csv += "\n";
        cells[early] = run.test ? format_fixed(run.test->rmse, 3) : "failed";
        log << "  gcn " << label << (early ? " early-stopping " : " full-schedule  ")
            << (run.test ? metrics_line(*run.test) : status) << "\n";
      }
      md += "| " + std::string(label) + " | " + cells[0] + " | " + cells[1] + " |\n";
    }
    write_text_file(dir / "config_comparison.csv", csv);
    write_text_file(dir / "config_comparison.md", md);
  }
  write_text_file(dir / "best.json", dump_json(best));
}

void cmd_sweep(const ExperimentConfig& config, std::ostream& log) {
  const auto dir = prepare_output(config.out);
  DirectoryLock lock(dir);
  write_manifest(dir, "sweep", config);
  const Dataset data = resolve_dataset(config);
  const SparsityPlan plan = plan_of(config);
  const SweepSettings settings = settings_of(config);
  const std::size_t total = plan.levels.size() * plan.models.size() * plan.seeds.size();
  std::size_t done = 0;
  const SweepResult result = run_sweep(data, plan, settings, [&](const SweepRun& run) {
    ++done;
    log << "[" << done << "/" << total << "] level " << run.level.to_string() << " "
        << to_string(run.model) << " seed " << run.seed << ": "
        << (run.test ? metrics_line(*run.test) : run.status) << "\n";
  });
  write_sweep_outputs(result, settings, dir);
  const ReportBundle bundle = build_report(parse_results(results_csv(result, settings.record_wall_time)));
  write_report(bundle, dir);
  log << bundle.sparsity_table;
}

void cmd_report(const std::filesystem::path& results, const std::filesystem::path& out,
                std::ostream& log) {
  const std::string text = read_text_file(results);
  const ReportBundle bundle = build_report(parse_results(text, results.string()));
  prepare_output(out);
  write_report(bundle, out);
  log << bundle.sparsity_table;
}

// ---------------------------------------------------------------------------
// Entry point

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph convolutional network pipeline for bicycle volume estimation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string model;
  std::string gcn_config;
  std::string level;
  app.add_option("--config", config_path, "JSON experiment config or manifest");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--model", model, "lr, svm, rf or gcn");
  app.add_option("--gcn-config", gcn_config, "GCN configuration label A..J");
  app.add_option("--level", level, "sparsity: fraction in [0, 1) or retained label count");

  auto* synth = app.add_subcommand("synth", "generate a synthetic city");
  auto* preprocess = app.add_subcommand("preprocess", "build features, targets and the skewness table");
  auto* train_cmd = app.add_subcommand("train", "train one model on a seeded split");
  auto* grid = app.add_subcommand("grid-search", "tune baselines and compare GCN configurations");
  auto* sweep = app.add_subcommand("sweep", "run the sparsity sweep");
  auto* report = app.add_subcommand("report", "rebuild report tables from results.csv");
  std::string results_path;
  report->add_option("results", results_path, "results.csv of a sweep")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (report->parsed()) {
      const std::filesystem::path results(results_path);
      const std::filesystem::path target =
          out_dir.empty() ? (results.has_parent_path() ? results.parent_path() : std::filesystem::path(".")) : std::filesystem::path(out_dir);
      cmd_report(results, target, out);
      return 0;
    }

    ExperimentConfig config =
        config_path.empty() ? parse_experiment_config(Json::object()) : load_experiment_config(config_path);
    if (seed) {
      config.seed = *seed;
      config.plan.seeds = {*seed};
    }
    if (!out_dir.empty()) config.out = out_dir;
    if (!gcn_config.empty()) {
      const auto labels = catalog_labels();
      if (std::find(labels.begin(), labels.end(), gcn_config) == labels.end()) {
        throw ConfigError("unknown GCN configuration '" + gcn_config + "' (expected A..J)");
      }
      config.gcn_config = gcn_config;
      config.plan.gcn_label = gcn_config;
    }
    std::optional<ModelKind> model_kind;
    if (!model.empty()) {
      model_kind = parse_model_kind(model);
      config.model = *model_kind;
      config.plan.models = {*model_kind};
    }
    if (!level.empty()) {
      config.level = SparsityLevel::parse(level);
      config.plan.levels = {config.level};
    }

    if (synth->parsed()) cmd_synth(config, out);
    else if (preprocess->parsed()) cmd_preprocess(config, out);
    else if (train_cmd->parsed()) cmd_train(config, out);
    else if (grid->parsed()) cmd_grid_search(config, model_kind, out);
    else if (sweep->parsed()) cmd_sweep(config, out);
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace cyclegcn
