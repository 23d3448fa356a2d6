#pragma once

#include <string>

#include "json.hpp"
#include "lsfd/losses.hpp"
#include "lsfd/model.hpp"

namespace lsfd {

struct TrainConfig;  // train.hpp

nlohmann::ordered_json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Rejects keys outside `allowed` (misspelled config entries fail fast).
void reject_unknown_keys(const nlohmann::json& j,
                         std::initializer_list<const char*> allowed,
                         const std::string& where);

}  // namespace lsfd
