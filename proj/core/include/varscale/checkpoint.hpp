#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "varscale/trainer.hpp"

namespace varscale {

inline constexpr int kCheckpointVersion = 1;

// JSON document: format tag and version, resolved config, step, lambda
// schedule, RNG engine states, and every parameter / optimiser array as
// {"shape": [...], "data": [...]} in column-major order.
nlohmann::json checkpoint_to_json(const TrainingState& state);
TrainingState checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const TrainingState& state, const std::string& path);

// Throws CheckpointError on unreadable, corrupt or version-mismatched files.
// When `expected` is given, the stored model shape must match it.
TrainingState load_checkpoint(const std::string& path,
                              const TrainConfig* expected = nullptr);

}  // namespace varscale
