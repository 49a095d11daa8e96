// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <json.hpp>

#include "ppou/run_config.hpp"

namespace ppou {

/// Writes the dataset described by `data` to a CSV plus a .meta.json
/// provenance sidecar (generator, parameters, seed).
void cmd_generate(const DataConfig& data, const std::string& out_path);

struct TrainOutputs {
  std::string model_path;
  std::string metrics_path;
  std::string summary_path;
  TrainResult result;
};

/// Trains per the config; writes model file, ndjson metrics stream and a
/// summary document into config.out_dir.
TrainOutputs cmd_train(const RunConfig& config);

/// Rowwise mean/variance/95% interval/dominating partition for the inputs
/// in data_csv, written as CSV.
void cmd_predict(const std::string& model_path, const std::string& data_csv,
                 const std::string& out_csv, int workers = 1);

/// Metrics of a saved model on a CSV; when clean_column names a column
/// present in the file, errors are also reported against that reference.
nlohmann::json cmd_eval(const std::string& model_path, const std::string& data_csv,
                        const std::string& clean_column = "", int workers = 1);

/// k-fold cross-validation of the configured run; returns per-fold and
/// aggregate metrics (mean and 95% confidence interval).
nlohmann::json cmd_crossval(const RunConfig& config, int k);

/// Global Chebyshev baseline fit on 1D data.
nlohmann::json cmd_baseline(const std::string& data_csv, int degree,
                            const std::string& clean_column = "");

}  // namespace ppou
