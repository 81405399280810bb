#pragma once

#include "mortcast/registry.hpp"

#include <json.hpp>

#include <filesystem>

namespace mortcast {

// Field-tagged structured text for fitted models; doubles round-trip exactly.
// Hyperparameters travel inside the artifact via the canonical spec string.
nlohmann::json model_to_json(const FittedModel& model);
FittedModel model_from_json(const nlohmann::json& j);

std::string model_to_string(const FittedModel& model);

void save_model(const FittedModel& model, const std::filesystem::path& path);
FittedModel load_model(const std::filesystem::path& path);

}  // namespace mortcast
