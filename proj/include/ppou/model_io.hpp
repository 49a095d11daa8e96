// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <json.hpp>

#include "ppou/mixture.hpp"

namespace ppou {

/// Self-describing model container: a one-line magic, the byte length of a
/// JSON header (format version, architecture, basis exponent table,
/// standardizer, run-config snapshot, array directory), then the raw
/// little-endian double payload. Doubles are stored bit-exactly, so a
/// loaded model predicts identically to the saved one.
void save_model(const PPOUModel& model, const nlohmann::json& run_config_snapshot,
                const std::string& path);

struct LoadedModel {
  PPOUModel model;
  nlohmann::json run_config;
  int format_version = 0;
};

LoadedModel load_model(const std::string& path);

}  // namespace ppou
