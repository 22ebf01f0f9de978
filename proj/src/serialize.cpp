#include "cyclegcn/serialize.hpp"

#include "cyclegcn/csv.hpp"
#include "cyclegcn/errors.hpp"

namespace cyclegcn {

namespace {

constexpr const char* kModelFormat = "cyclegcn-model";
constexpr int kModelVersion = 1;

template <typename Derived>
Json vector_json(const Eigen::DenseBase<Derived>& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v.derived()(i));
  return out;
}

Eigen::RowVectorXd row_from_json(const Json& j) {
  Eigen::RowVectorXd out(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) out(static_cast<Index>(i)) = j[i].get<double>();
  return out;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json data = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const Json& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
    throw DataError("matrix data length does not match its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  }
  return m;
}

Json layer_json(const LayerSpec& layer) {
  return std::visit(
      [](const auto& l) -> Json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GcnConv>) {
          return Json{{"type", "gcn_conv"}, {"in", l.in_dim}, {"out", l.out_dim}};
        } else if constexpr (std::is_same_v<T, Relu>) {
          return Json{{"type", "relu"}};
        } else if constexpr (std::is_same_v<T, BatchNorm>) {
          return Json{{"type", "batch_norm"}, {"dim", l.dim}};
        } else if constexpr (std::is_same_v<T, Dropout>) {
          return Json{{"type", "dropout"}, {"p", l.p}};
        } else {
          return Json{{"type", "fully_connected"}, {"in", l.in_dim}, {"out", l.out_dim}};
        }
      },
      layer);
}

LayerSpec layer_from_json(const Json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "gcn_conv") return GcnConv{j.at("in").get<Index>(), j.at("out").get<Index>()};
  if (type == "relu") return Relu{};
  if (type == "batch_norm") return BatchNorm{j.at("dim").get<Index>()};
  if (type == "dropout") return Dropout{j.at("p").get<double>()};
  if (type == "fully_connected") {
    return FullyConnected{j.at("in").get<Index>(), j.at("out").get<Index>()};
  }
  throw DataError("unknown layer type '" + type + "'");
}

}  // namespace

Json to_json(const TargetTransform& t) {
  return Json{{"kind", std::string(to_string(t.kind))},
              {"lambda", t.lambda},
              {"shift", t.shift},
              {"quantile_values", t.quantile_values},
              {"quantile_probabilities", t.quantile_probabilities}};
}

TargetTransform target_transform_from_json(const Json& j) {
  TargetTransform t;
  t.kind = parse_transform_kind(j.at("kind").get<std::string>());
  t.lambda = j.at("lambda").get<double>();
  t.shift = j.at("shift").get<double>();
  t.quantile_values = j.at("quantile_values").get<std::vector<double>>();
  t.quantile_probabilities = j.at("quantile_probabilities").get<std::vector<double>>();
  if (t.quantile_values.size() != t.quantile_probabilities.size()) {
    throw DataError("quantile knots and probabilities differ in length");
  }
  return t;
}

Json to_json(const TransformParams& params) {
  const FeatureParams& f = params.features;
  return Json{{"continuous", f.continuous_names},
              {"categorical", f.categorical_names},
              {"means", f.fills.continuous_means},
              {"modes", f.fills.categorical_modes},
              {"minimums", f.minimums},
              {"maximums", f.maximums},
              {"vocabularies", f.vocabularies},
              {"target", to_json(params.target)}};
}

TransformParams transform_params_from_json(const Json& j) {
  TransformParams p;
  FeatureParams& f = p.features;
  f.continuous_names = j.at("continuous").get<std::vector<std::string>>();
  f.categorical_names = j.at("categorical").get<std::vector<std::string>>();
  f.fills.continuous_means = j.at("means").get<std::vector<double>>();
  f.fills.categorical_modes = j.at("modes").get<std::vector<std::string>>();
  f.minimums = j.at("minimums").get<std::vector<double>>();
  f.maximums = j.at("maximums").get<std::vector<double>>();
  f.vocabularies = j.at("vocabularies").get<std::vector<std::vector<std::string>>>();
  const std::size_t nc = f.continuous_names.size();
  const std::size_t nk = f.categorical_names.size();
  if (f.fills.continuous_means.size() != nc || f.minimums.size() != nc || f.maximums.size() != nc ||
      f.fills.categorical_modes.size() != nk || f.vocabularies.size() != nk) {
    throw DataError("transform parameters have inconsistent column counts");
  }
  p.target = target_transform_from_json(j.at("target"));
  return p;
}

Json to_json(const ModelConfig& config) {
  Json layers = Json::array();
  for (const auto& layer : config.layers) layers.push_back(layer_json(layer));
  return Json{{"label", config.label},
              {"layers", std::move(layers)},
              {"output_head", layer_json(config.output_head)}};
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig config;
  config.label = j.at("label").get<std::string>();
  for (const auto& layer : j.at("layers")) config.layers.push_back(layer_from_json(layer));
  const LayerSpec head = layer_from_json(j.at("output_head"));
  if (!std::holds_alternative<FullyConnected>(head)) {
    throw DataError("output head must be fully connected");
  }
  config.output_head = std::get<FullyConnected>(head);
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("stored model architecture is invalid: ") + e.what());
  }
  return config;
}

Json to_json(const Metrics& m) {
  return Json{{"rmse", m.rmse},
              {"mse", m.mse},
              {"mae", m.mae},
              {"mape", m.mape ? Json(*m.mape) : Json()},
              {"excluded_zero_targets", m.excluded_zero_targets},
              {"count", m.count}};
}

Json to_json(const TrainedModel& model) {
  Json layers = Json::array();
  for (const LayerParameters& p : model.parameters.layers) {
    Json entry = Json::object();
    if (p.weight.size() > 0) entry["weight"] = matrix_json(p.weight);
    if (p.bias.size() > 0) entry["bias"] = vector_json(p.bias);
    if (p.gamma.size() > 0) entry["gamma"] = vector_json(p.gamma);
    if (p.beta.size() > 0) entry["beta"] = vector_json(p.beta);
    if (p.running_mean.size() > 0) entry["running_mean"] = vector_json(p.running_mean);
    if (p.running_var.size() > 0) entry["running_var"] = vector_json(p.running_var);
    layers.push_back(std::move(entry));
  }
  return Json{{"format", kModelFormat},
              {"version", kModelVersion},
              {"config", to_json(model.config)},
              {"parameters", std::move(layers)},
              {"transform", to_json(model.transform)},
              {"seed", model.seed},
              {"stopped_epoch", model.stopped_epoch},
              {"best_epoch", model.best_epoch}};
}

TrainedModel trained_model_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw DataError("not a model file");
    if (j.at("version").get<int>() != kModelVersion) {
      throw DataError("unsupported model file version " + j.at("version").dump());
    }
    TrainedModel model;
    model.config = model_config_from_json(j.at("config"));
    model.transform = target_transform_from_json(j.at("transform"));
    model.seed = j.at("seed").get<std::uint64_t>();
    model.stopped_epoch = j.at("stopped_epoch").get<int>();
    model.best_epoch = j.at("best_epoch").get<int>();

    const Parameters shape = initialize_parameters(model.config, 0);
    const Json& layers = j.at("parameters");
    if (layers.size() != shape.layers.size()) throw DataError("parameter layer count mismatch");
    model.parameters = shape;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      LayerParameters& p = model.parameters.layers[k];
      const Json& entry = layers[k];
      const auto load_row = [&](const char* key, Eigen::RowVectorXd& target) {
        if (target.size() == 0) return;
        const Eigen::RowVectorXd v = row_from_json(entry.at(key));
        if (v.size() != target.size()) throw DataError(std::string("shape mismatch in ") + key);
        target = v;
      };
      if (p.weight.size() > 0) {
        const Eigen::MatrixXd w = matrix_from_json(entry.at("weight"));
        if (w.rows() != p.weight.rows() || w.cols() != p.weight.cols()) {
          throw DataError("weight shape mismatch in layer " + std::to_string(k));
        }
        p.weight = w;
      }
      load_row("bias", p.bias);
      load_row("gamma", p.gamma);
      load_row("beta", p.beta);
      load_row("running_mean", p.running_mean);
      load_row("running_var", p.running_var);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  write_text_file(path, dump_json(to_json(model)));
}

TrainedModel load_model(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return trained_model_from_json(j);
}

std::string loss_curve_csv(const TrainedModel& model) {
  std::string out = "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < model.train_loss.size(); ++e) {
    out += join_csv({std::to_string(e + 1), format_number(model.train_loss[e]),
                     format_number(model.validation_loss[e])});
    out += '\n';
  }
  return out;
}

}  // namespace cyclegcn
