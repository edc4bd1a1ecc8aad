#pragma once

#include <filesystem>
#include <string_view>

#include <json.hpp>

#include "spermflow/dataset.hpp"
#include "spermflow/training.hpp"

namespace spermflow::training {

// Everything a CLI run depends on. Serialised as the TrainConfig fields at
// top level plus "flow" and "preprocess" sections.
struct RunConfig {
  TrainConfig train;
  flow::FarnebackParams flow;
  int n_chunks = dataset::kChunksPerVideo;
  dataset::ChunkPlacement placement = dataset::ChunkPlacement::Uniform;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const flow::FarnebackParams& params);
nlohmann::json to_json(const RunConfig& config);

// Unknown keys are rejected; absent keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& doc);
flow::FarnebackParams flow_params_from_json(const nlohmann::json& doc);
RunConfig run_config_from_json(const nlohmann::json& doc);

nlohmann::json load_json(const std::filesystem::path& path);

// Applies "a.b=value" to a key path that already exists in `doc`. The value
// is parsed as JSON when possible and taken as a plain string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

}  // namespace spermflow::training
