// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: generate | train | predict | eval | crossval |
// baseline. A JSON config file describes a run; flags override file keys.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ppou/commands.hpp"

namespace {

ppou::RunConfig load_config_file(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  nlohmann::json j;
  in >> j;
  return ppou::run_config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic partition-of-unity network regression"};
  app.require_subcommand(1);

  std::string config_path;
  std::string dataset, csv_path, out_path, model_path, data_csv, clean_col;
  long n_samples = -1;
  double alpha = -1.0;
  int dim = -1, rings = -1;
  double ring_spacing = -1.0, ring_radius = -1.0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
  int degree_flag = -1;
  int clusters_flag = -1;
  int latent_flag = -1;
  int iters_flag = -1;
  double lr_flag = -1.0;
  double sigma0_flag = -1.0;
  double test_fraction_flag = -1.0;
  std::string arch_flag, loss_flag;
  bool noise_flag = false;
  int k_folds = 4;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t& v) {
          seed = v;
          seed_set = true;
        },
        "Seed for all randomness in this command");
  };

  // generate
  auto* gen = app.add_subcommand("generate", "Write a benchmark dataset CSV");
  gen->add_option("--dataset", dataset, "sine|trefoil|swissroll|rings")->required();
  gen->add_option("--n", n_samples, "Sample count");
  gen->add_option("--alpha", alpha, "Sine noise level");
  gen->add_option("--dim", dim, "Ambient dimension (rings)");
  gen->add_option("--rings", rings, "Number of rings");
  gen->add_option("--ring-spacing", ring_spacing, "Ring center spacing");
  gen->add_option("--ring-radius", ring_radius, "Ring radius");
  gen->add_option("--out", out_path, "Output CSV path")->required();
  add_seed(gen);

  // train
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config_path, "JSON run configuration");
  tr->add_option("--data", csv_path, "Dataset CSV (overrides config data source)");
  tr->add_option("--dataset", dataset, "Generator name (overrides config data source)");
  tr->add_option("--n", n_samples, "Generator sample count");
  tr->add_option("--alpha", alpha, "Sine noise level");
  tr->add_option("--dim", dim, "Ambient dimension (rings)");
  tr->add_option("--rings", rings, "Number of rings");
  tr->add_option("--arch", arch_flag, "basic|serial|parallel");
  tr->add_option("--clusters", clusters_flag, "Partition count J");
  tr->add_option("--degree", degree_flag, "Polynomial degree");
  tr->add_option("--latent-dim", latent_flag, "Latent dimension");
  tr->add_option("--loss", loss_flag, "em|alternative");
  tr->add_option("--iters", iters_flag, "Max EM iterations");
  tr->add_option("--lr", lr_flag, "Adam learning rate");
  tr->add_flag("--noise-model", noise_flag, "Enable the background-noise EM variant");
  tr->add_option("--sigma0", sigma0_flag, "Background noise variance sigma0^2");
  tr->add_option("--test-fraction", test_fraction_flag, "Held-out fraction");
  tr->add_option("--workers", workers, "Worker threads (1 = bitwise deterministic)");
  tr->add_option("--out", out_path, "Output directory");
  add_seed(tr);

  // predict
  auto* pr = app.add_subcommand("predict", "Predict with a saved model");
  pr->add_option("--model", model_path, "Model file")->required();
  pr->add_option("--data", data_csv, "Input CSV")->required();
  pr->add_option("--out", out_path, "Output CSV")->required();
  pr->add_option("--workers", workers, "Worker threads");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a saved model on a CSV");
  ev->add_option("--model", model_path, "Model file")->required();
  ev->add_option("--data", data_csv, "Test CSV")->required();
  ev->add_option("--clean-col", clean_col, "Clean-signal column used as reference");
  ev->add_option("--workers", workers, "Worker threads");

  // crossval
  auto* cv = app.add_subcommand("crossval", "k-fold cross-validation");
  cv->add_option("--config", config_path, "JSON run configuration");
  cv->add_option("--data", csv_path, "Dataset CSV (overrides config)");
  cv->add_option("--k", k_folds, "Fold count");
  cv->add_option("--workers", workers, "Worker threads");
  add_seed(cv);

  // baseline
  auto* bl = app.add_subcommand("baseline", "Global Chebyshev baseline fit (1D)");
  bl->add_option("--data", data_csv, "Dataset CSV")->required();
  bl->add_option("--degree", degree_flag, "Polynomial degree")->required();
  bl->add_option("--clean-col", clean_col, "Clean-signal column used as reference");

  CLI11_PARSE(app, argc, argv);

  try {
    auto apply_data_flags = [&](ppou::DataConfig& d) {
      if (!csv_path.empty()) {
        d.source = "csv";
        d.path = csv_path;
      }
      if (!dataset.empty()) d.source = dataset;
      if (n_samples >= 0) d.n = n_samples;
      if (alpha >= 0.0) d.alpha = alpha;
      if (dim >= 0) d.dim = dim;
      if (rings >= 0) d.rings = rings;
      if (ring_spacing >= 0.0) d.ring_spacing = ring_spacing;
      if (ring_radius >= 0.0) d.ring_radius = ring_radius;
      if (seed_set) d.seed = seed;
    };
    auto apply_run_flags = [&](ppou::RunConfig& c) {
      apply_data_flags(c.data);
      if (!arch_flag.empty()) {
        if (arch_flag == "basic") c.model.architecture = ppou::Architecture::kBasic;
        else if (arch_flag == "serial") c.model.architecture = ppou::Architecture::kSerial;
        else if (arch_flag == "parallel") c.model.architecture = ppou::Architecture::kParallel;
        else throw std::invalid_argument("--arch: unknown value '" + arch_flag + "'");
      }
      if (clusters_flag >= 0) c.model.clusters = clusters_flag;
      if (degree_flag >= 0) c.model.degree = degree_flag;
      if (latent_flag >= 0) c.model.latent_dim = latent_flag;
      if (!loss_flag.empty()) {
        if (loss_flag == "em") c.train.loss = ppou::LossKind::kEm;
        else if (loss_flag == "alternative") c.train.loss = ppou::LossKind::kAlternative;
        else throw std::invalid_argument("--loss: unknown value '" + loss_flag + "'");
      }
      if (iters_flag >= 0) c.train.max_em_iters = iters_flag;
      if (lr_flag > 0.0) c.train.adam.learning_rate = lr_flag;
      if (noise_flag) c.train.noise_model = true;
      if (sigma0_flag >= 0.0) {
        c.train.sigma0_2 = sigma0_flag;
        c.train.noise_model = true;
      }
      if (test_fraction_flag >= 0.0) c.test_fraction = test_fraction_flag;
      if (workers > 0) c.workers = workers;
      if (seed_set) c.seed = seed;
      if (!out_path.empty()) c.out_dir = out_path;
    };

    if (gen->parsed()) {
      ppou::DataConfig d;
      d.source = dataset;
      apply_data_flags(d);
      ppou::cmd_generate(d, out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (tr->parsed()) {
      ppou::RunConfig config = load_config_file(config_path);
      apply_run_flags(config);
      const ppou::TrainOutputs out = ppou::cmd_train(config);
      std::cout << "model:   " << out.model_path << "\n"
                << "metrics: " << out.metrics_path << "\n"
                << "summary: " << out.summary_path << "\n"
                << "train rel_l2 " << out.result.train.rel_l2;
      if (out.result.has_test) std::cout << ", test rel_l2 " << out.result.test.rel_l2;
      std::cout << " (" << out.result.iterations << " iterations, "
                << (out.result.converged ? "converged" : "max iters") << ")\n";
    } else if (pr->parsed()) {
      ppou::cmd_predict(model_path, data_csv, out_path, workers > 0 ? workers : 1);
      std::cout << "wrote " << out_path << "\n";
    } else if (ev->parsed()) {
      std::cout << ppou::cmd_eval(model_path, data_csv, clean_col, workers > 0 ? workers : 1)
                       .dump(2)
                << "\n";
    } else if (cv->parsed()) {
      ppou::RunConfig config = load_config_file(config_path);
      apply_run_flags(config);
      std::cout << ppou::cmd_crossval(config, k_folds).dump(2) << "\n";
    } else if (bl->parsed()) {
      std::cout << ppou::cmd_baseline(data_csv, degree_flag, clean_col).dump(2) << "\n";
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
