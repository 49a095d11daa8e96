// SPDX-License-Identifier: Apache-2.0
#include "ppou/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "ppou/model_io.hpp"
#include "ppou/parallel.hpp"

namespace ppou {

using nlohmann::json;

namespace {

void format_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

json eval_metrics_json(const EvalMetrics& m) {
  json j;
  j["rel_l2"] = m.rel_l2;
  j["abs_l2"] = m.abs_l2;
  j["l2_normalized"] = m.l2_normalized;
  j["mae"] = m.mae;
  j["coverage95"] = m.coverage95;
  return j;
}

json iteration_metrics_json(const IterationMetrics& m) {
  json j;
  j["iter"] = m.iter;
  j["elbo"] = m.elbo;
  j["loss"] = m.loss;
  j["rel_l2_train"] = m.rel_l2_train;
  if (std::isfinite(m.rel_l2_test)) j["rel_l2_test"] = m.rel_l2_test;
  j["occupancy"] = std::vector<double>(m.occupancy.data(), m.occupancy.data() + m.occupancy.size());
  j["sigma2"] = std::vector<double>(m.sigma2.data(), m.sigma2.data() + m.sigma2.size());
  if (m.empty_clusters > 0) j["empty_clusters"] = m.empty_clusters;
  return j;
}

}  // namespace

void cmd_generate(const DataConfig& data, const std::string& out_path) {
  const Dataset d = make_dataset(data);
  save_csv(d, out_path);
  json meta;
  meta["generator"] = data.source;
  meta["n"] = d.n();
  meta["dim"] = d.dim();
  meta["seed"] = data.seed;
  meta["provenance"] = d.provenance;
  if (data.source == "sine") meta["alpha"] = data.alpha;
  if (data.source == "rings") {
    meta["rings"] = data.rings;
    meta["ring_radius"] = data.ring_radius;
    meta["ring_spacing"] = data.ring_spacing;
  }
  if (data.source == "swissroll") meta["swiss_jitter"] = data.swiss_jitter;
  std::ofstream side(out_path + ".meta.json");
  if (!side) throw std::runtime_error("cmd_generate: cannot write sidecar for '" + out_path + "'");
  side << meta.dump(2) << "\n";
}

TrainOutputs cmd_train(const RunConfig& config) {
  Dataset all = make_dataset(config.data);
  validate_run_config(config, all.dim());

  Dataset train_set = std::move(all);
  Dataset test_set;
  bool has_test = false;
  if (config.test_fraction > 0.0) {
    auto parts = split(train_set, 1.0 - config.test_fraction, mix_seed(config.seed, 0x5B117));
    train_set = std::move(parts.first);
    test_set = std::move(parts.second);
    has_test = true;
  }

  PPOUModel model = build_model_for_data(config.model, train_set.x, config.seed);
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  tc.workers = config.workers;

  std::filesystem::create_directories(config.out_dir);
  TrainOutputs out;
  out.model_path = config.out_dir + "/model.ppou";
  out.metrics_path = config.out_dir + "/metrics.ndjson";
  out.summary_path = config.out_dir + "/summary.json";

  std::ofstream metrics_stream(out.metrics_path);
  if (!metrics_stream) {
    throw std::runtime_error("cmd_train: cannot open '" + out.metrics_path + "' for writing");
  }
  const MetricsSink sink = [&metrics_stream](const IterationMetrics& m) {
    metrics_stream << iteration_metrics_json(m).dump() << "\n";
  };

  out.result = train(model, train_set, has_test ? &test_set : nullptr, tc, sink);
  metrics_stream.flush();

  save_model(model, to_json(config), out.model_path);

  json summary;
  summary["iterations"] = out.result.iterations;
  summary["converged"] = out.result.converged;
  summary["wall_seconds"] = out.result.wall_seconds;
  summary["train"] = eval_metrics_json(out.result.train);
  if (out.result.has_test) summary["test"] = eval_metrics_json(out.result.test);
  if (train_set.clean.size() > 0) {
    summary["train_vs_clean"] =
        eval_metrics_json(evaluate(model, train_set.x, train_set.clean, config.workers));
  }
  std::ofstream summary_stream(out.summary_path);
  summary_stream << summary.dump(2) << "\n";
  return out;
}

void cmd_predict(const std::string& model_path, const std::string& data_csv,
                 const std::string& out_csv, int workers) {
  const LoadedModel loaded = load_model(model_path);
  CsvSchema schema;
  schema.target_column = "";  // inputs may arrive without targets
  const Dataset data = load_csv(data_csv, schema);
  if (data.dim() != loaded.model.input_dim) {
    throw std::invalid_argument("cmd_predict: data has " + std::to_string(data.dim()) +
                                " input columns, model expects " +
                                std::to_string(loaded.model.input_dim));
  }
  const long n = data.n();
  std::vector<Moments> rows(static_cast<std::size_t>(n));
  parallel_chunks(n, workers, [&](int, std::int64_t b, std::int64_t e) {
    for (std::int64_t r = b; r < e; ++r) {
      rows[static_cast<std::size_t>(r)] =
          predict_moments(loaded.model, data.x.row(r).transpose());
    }
  });

  std::ofstream out(out_csv);
  if (!out) throw std::runtime_error("cmd_predict: cannot open '" + out_csv + "' for writing");
  std::string buf = "mean,variance,ci_lo,ci_hi,argmax_partition\n";
  for (long r = 0; r < n; ++r) {
    const Moments& m = rows[static_cast<std::size_t>(r)];
    const double half = 1.96 * std::sqrt(std::max(m.var, 0.0));
    format_double(buf, m.mean);
    buf += ',';
    format_double(buf, m.var);
    buf += ',';
    format_double(buf, m.mean - half);
    buf += ',';
    format_double(buf, m.mean + half);
    buf += ',' + std::to_string(m.argmax_partition) + '\n';
    if (buf.size() > (1u << 20)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

json cmd_eval(const std::string& model_path, const std::string& data_csv,
              const std::string& clean_column, int workers) {
  const LoadedModel loaded = load_model(model_path);
  CsvSchema schema;
  if (!clean_column.empty()) schema.clean_column = clean_column;
  const Dataset data = load_csv(data_csv, schema);
  if (data.dim() != loaded.model.input_dim) {
    throw std::invalid_argument("cmd_eval: data has " + std::to_string(data.dim()) +
                                " input columns, model expects " +
                                std::to_string(loaded.model.input_dim));
  }

  json report;
  report["against_y"] = eval_metrics_json(evaluate(loaded.model, data.x, data.y, workers));
  if (!clean_column.empty()) {
    if (data.clean.size() == 0) {
      throw std::invalid_argument("cmd_eval: clean column '" + clean_column +
                                  "' not present in '" + data_csv + "'");
    }
    report["against_clean"] =
        eval_metrics_json(evaluate(loaded.model, data.x, data.clean, workers));
  }

  // Coverage is meaningless when the predicted intervals collapse below
  // any plausible noise scale (models trained on noiseless data): median
  // predicted std under 2% of the RMS target, or at the variance floor.
  Eigen::VectorXd vars(data.n());
  parallel_chunks(data.n(), workers, [&](int, std::int64_t b, std::int64_t e) {
    for (std::int64_t r = b; r < e; ++r) {
      vars(r) = predict_moments(loaded.model, data.x.row(r).transpose()).var;
    }
  });
  std::vector<double> sorted(vars.data(), vars.data() + vars.size());
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median_var = sorted[sorted.size() / 2];
  const double y_scale2 = data.y.squaredNorm() / static_cast<double>(data.n());
  report["coverage_degenerate"] =
      median_var <= std::max(4e-4 * y_scale2, 10.0 * loaded.model.sigma_floor2);
  return report;
}

json cmd_crossval(const RunConfig& config, int k) {
  const Dataset data = make_dataset(config.data);
  validate_run_config(config, data.dim());
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  tc.workers = config.workers;
  const CrossValResult cv = cross_validate(data, config.model, tc, k, config.seed);

  json report;
  report["k"] = k;
  json folds = json::array();
  for (const auto& f : cv.folds) {
    json fj;
    fj["test"] = eval_metrics_json(f.test);
    fj["train_rel_l2"] = f.train_rel_l2;
    fj["iterations"] = f.iterations;
    folds.push_back(fj);
  }
  report["folds"] = folds;
  report["mean_rel_l2"] = cv.mean_rel_l2;
  report["ci95_half_width"] = cv.ci95_half_width;
  return report;
}

json cmd_baseline(const std::string& data_csv, int degree, const std::string& clean_column) {
  CsvSchema schema;
  if (!clean_column.empty()) schema.clean_column = clean_column;
  const Dataset data = load_csv(data_csv, schema);
  if (data.dim() != 1) {
    throw std::invalid_argument("cmd_baseline: defined for 1D inputs, data has " +
                                std::to_string(data.dim()) + " columns");
  }
  const GlobalPolyFit fit = fit_global_poly(data.x.col(0), data.y, degree);
  const Eigen::VectorXd yhat = eval_global_poly(fit, data.x.col(0));

  json report;
  report["degree"] = degree;
  report["coeffs"] = std::vector<double>(fit.coeffs.data(), fit.coeffs.data() + fit.coeffs.size());
  report["rel_l2_vs_y"] = fit.rel_l2;
  if (!clean_column.empty() && data.clean.size() > 0) {
    const double norm = data.clean.norm();
    const double err = (yhat - data.clean).norm();
    report["rel_l2_vs_clean"] = norm > 0.0 ? err / norm : err;
  }
  return report;
}

}  // namespace ppou
