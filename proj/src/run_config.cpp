// SPDX-License-Identifier: Apache-2.0
#include "ppou/run_config.hpp"

#include <stdexcept>

namespace ppou {

using nlohmann::json;

namespace {

json net_spec_json(const NetSpec& n) {
  return json{{"depth", n.depth},
              {"width", n.width},
              {"residual", n.residual},
              {"activation", n.activation == Activation::kTanh ? "tanh" : "relu"}};
}

NetSpec net_spec_from(const json& j, const NetSpec& defaults) {
  NetSpec n = defaults;
  n.depth = j.value("depth", n.depth);
  n.width = j.value("width", n.width);
  n.residual = j.value("residual", n.residual);
  const std::string act =
      j.value("activation", n.activation == Activation::kTanh ? "tanh" : "relu");
  if (act != "tanh" && act != "relu") {
    throw std::invalid_argument("activation: expected 'tanh' or 'relu', got '" + act + "'");
  }
  n.activation = act == "tanh" ? Activation::kTanh : Activation::kRelu;
  return n;
}

}  // namespace

json to_json(const RunConfig& c) {
  json j;
  j["data"] = {{"source", c.data.source},
               {"path", c.data.path},
               {"n", c.data.n},
               {"alpha", c.data.alpha},
               {"dim", c.data.dim},
               {"rings", c.data.rings},
               {"ring_radius", c.data.ring_radius},
               {"ring_spacing", c.data.ring_spacing},
               {"swiss_jitter", c.data.swiss_jitter},
               {"seed", c.data.seed}};
  std::string arch = "basic";
  if (c.model.architecture == Architecture::kSerial) arch = "serial";
  if (c.model.architecture == Architecture::kParallel) arch = "parallel";
  j["model"] = {{"architecture", arch},
                {"latent_dim", c.model.latent_dim},
                {"clusters", c.model.clusters},
                {"basis_family",
                 c.model.family == BasisFamily::kChebyshev ? "chebyshev" : "monomial"},
                {"degree", c.model.degree},
                {"standardize",
                 c.model.standardize == StandardizeMode::kIsotropic ? "isotropic" : "percoord"},
                {"encoder", net_spec_json(c.model.encoder)},
                {"classifier", net_spec_json(c.model.classifier)}};
  std::string pre_input = "auto";
  if (c.train.pretrain.input == PretrainInput::kRaw) pre_input = "raw";
  if (c.train.pretrain.input == PretrainInput::kLatent) pre_input = "latent";
  j["train"] = {{"loss", c.train.loss == LossKind::kEm ? "em" : "alternative"},
                {"max_em_iters", c.train.max_em_iters},
                {"grad_steps_per_m", c.train.grad_steps_per_m},
                {"learning_rate", c.train.adam.learning_rate},
                {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},
                {"adam_epsilon", c.train.adam.epsilon},
                {"batch_size", c.train.batch_size},
                {"pretrain",
                 {{"kmeans_clusters", c.train.pretrain.clusters},
                  {"epochs", c.train.pretrain.epochs},
                  {"input", pre_input}}},
                {"rel_elbo_tol", c.train.rel_elbo_tol},
                {"patience", c.train.patience},
                {"noise_model", c.train.noise_model},
                {"sigma0_2", c.train.sigma0_2},
                {"convolved_responsibilities", c.train.convolved_responsibilities},
                {"epsilon_cluster", c.train.epsilon_cluster},
                {"sigma_floor_rel", c.train.sigma_floor_rel}};
  j["test_fraction"] = c.test_fraction;
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (j.contains("data")) {
    const json& d = j.at("data");
    c.data.source = d.value("source", c.data.source);
    c.data.path = d.value("path", c.data.path);
    c.data.n = d.value("n", c.data.n);
    c.data.alpha = d.value("alpha", c.data.alpha);
    c.data.dim = d.value("dim", c.data.dim);
    c.data.rings = d.value("rings", c.data.rings);
    c.data.ring_radius = d.value("ring_radius", c.data.ring_radius);
    c.data.ring_spacing = d.value("ring_spacing", c.data.ring_spacing);
    c.data.swiss_jitter = d.value("swiss_jitter", c.data.swiss_jitter);
    c.data.seed = d.value("seed", c.data.seed);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    const std::string arch = m.value("architecture", std::string("basic"));
    if (arch == "basic") {
      c.model.architecture = Architecture::kBasic;
    } else if (arch == "serial") {
      c.model.architecture = Architecture::kSerial;
    } else if (arch == "parallel") {
      c.model.architecture = Architecture::kParallel;
    } else {
      throw std::invalid_argument("model.architecture: unknown value '" + arch + "'");
    }
    c.model.latent_dim = m.value("latent_dim", c.model.latent_dim);
    c.model.clusters = m.value("clusters", c.model.clusters);
    const std::string fam = m.value("basis_family", std::string("chebyshev"));
    if (fam != "chebyshev" && fam != "monomial") {
      throw std::invalid_argument("model.basis_family: unknown value '" + fam + "'");
    }
    c.model.family = fam == "chebyshev" ? BasisFamily::kChebyshev : BasisFamily::kMonomial;
    c.model.degree = m.value("degree", c.model.degree);
    const std::string std_mode = m.value("standardize", std::string("isotropic"));
    if (std_mode != "isotropic" && std_mode != "percoord") {
      throw std::invalid_argument("model.standardize: unknown value '" + std_mode + "'");
    }
    c.model.standardize = std_mode == "isotropic" ? StandardizeMode::kIsotropic
                                                  : StandardizeMode::kPerCoordinate;
    if (m.contains("encoder")) c.model.encoder = net_spec_from(m.at("encoder"), c.model.encoder);
    if (m.contains("classifier")) {
      c.model.classifier = net_spec_from(m.at("classifier"), c.model.classifier);
    }
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    const std::string loss = t.value("loss", std::string("em"));
    if (loss != "em" && loss != "alternative") {
      throw std::invalid_argument("train.loss: unknown value '" + loss + "'");
    }
    c.train.loss = loss == "em" ? LossKind::kEm : LossKind::kAlternative;
    c.train.max_em_iters = t.value("max_em_iters", c.train.max_em_iters);
    c.train.grad_steps_per_m = t.value("grad_steps_per_m", c.train.grad_steps_per_m);
    c.train.adam.learning_rate = t.value("learning_rate", c.train.adam.learning_rate);
    c.train.adam.beta1 = t.value("beta1", c.train.adam.beta1);
    c.train.adam.beta2 = t.value("beta2", c.train.adam.beta2);
    c.train.adam.epsilon = t.value("adam_epsilon", c.train.adam.epsilon);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    if (t.contains("pretrain")) {
      const json& p = t.at("pretrain");
      c.train.pretrain.clusters = p.value("kmeans_clusters", 0);
      c.train.pretrain.epochs = p.value("epochs", 0);
      const std::string in = p.value("input", std::string("auto"));
      if (in == "auto") {
        c.train.pretrain.input = PretrainInput::kAuto;
      } else if (in == "raw") {
        c.train.pretrain.input = PretrainInput::kRaw;
      } else if (in == "latent") {
        c.train.pretrain.input = PretrainInput::kLatent;
      } else {
        throw std::invalid_argument("train.pretrain.input: unknown value '" + in + "'");
      }
    }
    c.train.rel_elbo_tol = t.value("rel_elbo_tol", c.train.rel_elbo_tol);
    c.train.patience = t.value("patience", c.train.patience);
    c.train.noise_model = t.value("noise_model", c.train.noise_model);
    c.train.sigma0_2 = t.value("sigma0_2", c.train.sigma0_2);
    c.train.convolved_responsibilities =
        t.value("convolved_responsibilities", c.train.convolved_responsibilities);
    c.train.epsilon_cluster = t.value("epsilon_cluster", c.train.epsilon_cluster);
    c.train.sigma_floor_rel = t.value("sigma_floor_rel", c.train.sigma_floor_rel);
  }
  c.test_fraction = j.value("test_fraction", c.test_fraction);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  return c;
}

void validate_run_config(const RunConfig& c, int input_dim) {
  auto fail = [](const std::string& path, const std::string& why) {
    throw std::invalid_argument(path + ": " + why);
  };
  if (input_dim < 1) fail("data", "dataset has no input columns");
  if (c.model.clusters < 1) fail("model.clusters", "must be >= 1");
  if (c.model.degree < 0) fail("model.degree", "must be >= 0");
  const bool has_enc = c.model.architecture != Architecture::kBasic;
  if (has_enc) {
    if (c.model.latent_dim < 1) fail("model.latent_dim", "must be >= 1 with an encoder");
    if (c.model.encoder.depth < 1) fail("model.encoder.depth", "must be >= 1");
    if (c.model.encoder.width < 1) fail("model.encoder.width", "must be >= 1");
  } else if (c.model.latent_dim != 0 && c.model.latent_dim != input_dim) {
    fail("model.latent_dim", "basic architecture uses the input dimension " +
                                 std::to_string(input_dim) + ", got " +
                                 std::to_string(c.model.latent_dim));
  }
  if (c.model.classifier.depth < 1) fail("model.classifier.depth", "must be >= 1");
  if (c.model.classifier.width < 1) fail("model.classifier.width", "must be >= 1");
  if (c.train.max_em_iters < 1) fail("train.max_em_iters", "must be >= 1");
  if (c.train.grad_steps_per_m < 0) fail("train.grad_steps_per_m", "must be >= 0");
  if (!(c.train.adam.learning_rate > 0.0)) fail("train.learning_rate", "must be > 0");
  if (!(c.train.rel_elbo_tol > 0.0)) fail("train.rel_elbo_tol", "must be > 0");
  if (c.train.patience < 1) fail("train.patience", "must be >= 1");
  if (c.train.sigma0_2 < 0.0) fail("train.sigma0_2", "must be >= 0");
  if (c.train.batch_size < 0) fail("train.batch_size", "must be >= 0");
  if (c.train.pretrain.clusters != 0 && c.train.pretrain.clusters != c.model.clusters) {
    fail("train.pretrain.kmeans_clusters",
         "must equal model.clusters (" + std::to_string(c.model.clusters) + ")");
  }
  if (c.train.pretrain.epochs < 0) fail("train.pretrain.epochs", "must be >= 0");
  if (c.test_fraction < 0.0 || c.test_fraction >= 1.0) {
    fail("test_fraction", "must lie in [0, 1)");
  }
  if (c.workers < 1) fail("workers", "must be >= 1");
}

Dataset make_dataset(const DataConfig& c) {
  if (c.source == "sine") return gen_sine_noise(c.n, c.alpha, c.seed);
  if (c.source == "trefoil") return gen_trefoil(c.n);
  if (c.source == "swissroll") {
    SwissRollOptions opt;
    opt.jitter = c.swiss_jitter;
    return gen_swissroll(c.n, c.seed, opt);
  }
  if (c.source == "rings") {
    RingsOptions opt;
    opt.radius = c.ring_radius;
    opt.spacing = c.ring_spacing;
    return gen_rings(c.dim, c.rings, c.n, c.seed, opt);
  }
  if (c.source == "csv") {
    if (c.path.empty()) throw std::invalid_argument("data.path: required for source 'csv'");
    return load_csv(c.path, c.schema);
  }
  throw std::invalid_argument("data.source: unknown generator '" + c.source + "'");
}

}  // namespace ppou
