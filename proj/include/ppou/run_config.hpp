// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ppou/data.hpp"
#include "ppou/trainer.hpp"

namespace ppou {

/// Dataset source: one of the built-in generators or a CSV file.
struct DataConfig {
  std::string source = "csv";  // sine | trefoil | swissroll | rings | csv
  std::string path;
  long n = 1024;
  double alpha = 0.1;
  int dim = 10;
  int rings = 4;
  double ring_radius = 1.0;
  double ring_spacing = 1.0;
  double swiss_jitter = 0.0;
  std::uint64_t seed = 1;
  CsvSchema schema;
};

/// Complete declarative description of a run. JSON keys mirror the fields;
/// command-line flags override file values.
struct RunConfig {
  DataConfig data;
  ModelSpec model;
  TrainConfig train;
  double test_fraction = 0.0;  // 0 = no held-out split
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int workers = 1;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Rejects dimension-inconsistent or out-of-range configurations before
/// any computation; error messages carry the offending field path.
void validate_run_config(const RunConfig& config, int input_dim);

/// Builds the dataset described by the config (generator or CSV).
Dataset make_dataset(const DataConfig& config);

}  // namespace ppou
