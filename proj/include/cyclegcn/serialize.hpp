#pragma once

#include "cyclegcn/preprocess.hpp"
#include "cyclegcn/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace cyclegcn {

using Json = nlohmann::ordered_json;

Json to_json(const TargetTransform& transform);
TargetTransform target_transform_from_json(const Json& j);

Json to_json(const TransformParams& params);
TransformParams transform_params_from_json(const Json& j);

Json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const Json& j);

Json to_json(const Metrics& metrics);

/// Architecture, parameters (including running statistics), target transform,
/// seed and stopping epochs. Loss histories are written separately.
Json to_json(const TrainedModel& model);
/// Throws DataError on a wrong format tag, an unknown version or shapes that
/// disagree with the architecture.
TrainedModel trained_model_from_json(const Json& j);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

/// `epoch,train_loss,val_loss`, one row per epoch.
std::string loss_curve_csv(const TrainedModel& model);

/// Indented JSON with a trailing newline.
std::string dump_json(const Json& j);

}  // namespace cyclegcn
