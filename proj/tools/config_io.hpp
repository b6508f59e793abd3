#pragma once

#include "json.hpp"
#include "metaexp/harness.hpp"

namespace metaexp::cli {

// Built-in defaults overlaid with the file tree; keys mirror the config
// structs and unknown or mistyped keys are rejected with their full path.
harness::ExperimentConfig config_from_json(const nlohmann::json& tree);

// fully resolved tree; config_from_json(config_to_json(cfg)) round-trips
nlohmann::json config_to_json(const harness::ExperimentConfig& cfg);

}  // namespace metaexp::cli
