#pragma once

#include "ingra/model.hpp"
#include "json.hpp"

// Shared between checkpoint io and eval-report serialization so the config
// snapshot uses one field layout everywhere.
namespace ingra {

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

} // namespace ingra
