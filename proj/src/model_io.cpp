// SPDX-License-Identifier: Apache-2.0
#include "ppou/model_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace ppou {

namespace {

constexpr const char* kMagic = "ppou-model";
constexpr int kFormatVersion = 1;

using nlohmann::json;

std::string architecture_name(Architecture a) {
  switch (a) {
    case Architecture::kBasic:
      return "basic";
    case Architecture::kSerial:
      return "serial";
    case Architecture::kParallel:
      return "parallel";
  }
  return "basic";
}

Architecture architecture_from(const std::string& s) {
  if (s == "basic") return Architecture::kBasic;
  if (s == "serial") return Architecture::kSerial;
  if (s == "parallel") return Architecture::kParallel;
  throw std::runtime_error("load_model: unknown architecture '" + s + "'");
}

json net_meta(const DenseNet& net) {
  json j;
  j["activation"] = net.activation == Activation::kTanh ? "tanh" : "relu";
  j["residual"] = net.residual;
  switch (net.output_transform) {
    case OutputTransform::kIdentity:
      j["output_transform"] = "identity";
      break;
    case OutputTransform::kSoftmax:
      j["output_transform"] = "softmax";
      break;
    case OutputTransform::kTanh:
      j["output_transform"] = "tanh";
      break;
  }
  j["layer_count"] = net.layers.size();
  return j;
}

void net_from_meta(const json& j, DenseNet& net) {
  const std::string act = j.at("activation").get<std::string>();
  net.activation = act == "tanh" ? Activation::kTanh : Activation::kRelu;
  net.residual = j.at("residual").get<bool>();
  const std::string out = j.at("output_transform").get<std::string>();
  if (out == "identity") {
    net.output_transform = OutputTransform::kIdentity;
  } else if (out == "softmax") {
    net.output_transform = OutputTransform::kSoftmax;
  } else {
    net.output_transform = OutputTransform::kTanh;
  }
  net.layers.resize(j.at("layer_count").get<std::size_t>());
}

struct ArrayDirectory {
  json entries = json::array();
  std::vector<double> payload;

  void add(const std::string& name, const Eigen::MatrixXd& m) {
    json e;
    e["name"] = name;
    e["rows"] = m.rows();
    e["cols"] = m.cols();
    e["offset"] = payload.size();
    entries.push_back(e);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) payload.push_back(m(r, c));
    }
  }
  void add(const std::string& name, const Eigen::VectorXd& v) {
    json e;
    e["name"] = name;
    e["rows"] = v.size();
    e["cols"] = 1;
    e["offset"] = payload.size();
    entries.push_back(e);
    for (Eigen::Index r = 0; r < v.size(); ++r) payload.push_back(v(r));
  }
};

class ArrayReader {
 public:
  ArrayReader(const json& entries, const std::vector<double>& payload)
      : entries_(entries), payload_(payload) {}

  Eigen::MatrixXd matrix(const std::string& name) const {
    const json& e = find(name);
    const Eigen::Index rows = e.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = e.at("cols").get<Eigen::Index>();
    const std::size_t off = e.at("offset").get<std::size_t>();
    if (off + static_cast<std::size_t>(rows * cols) > payload_.size()) {
      throw std::runtime_error("load_model: array '" + name + "' exceeds payload");
    }
    Eigen::MatrixXd m(rows, cols);
    std::size_t i = off;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = payload_[i++];
    }
    return m;
  }

  Eigen::VectorXd vector(const std::string& name) const {
    const Eigen::MatrixXd m = matrix(name);
    return Eigen::VectorXd(m.col(0));
  }

 private:
  const json& find(const std::string& name) const {
    for (const auto& e : entries_) {
      if (e.at("name").get<std::string>() == name) return e;
    }
    throw std::runtime_error("load_model: missing array '" + name + "'");
  }
  const json& entries_;
  const std::vector<double>& payload_;
};

}  // namespace

void save_model(const PPOUModel& model, const json& run_config_snapshot,
                const std::string& path) {
  ArrayDirectory dir;
  if (model.has_encoder()) {
    for (std::size_t l = 0; l < model.encoder.layers.size(); ++l) {
      dir.add("encoder.layers[" + std::to_string(l) + "].weight", model.encoder.layers[l].weight);
      dir.add("encoder.layers[" + std::to_string(l) + "].bias", model.encoder.layers[l].bias);
    }
  }
  for (std::size_t l = 0; l < model.classifier.layers.size(); ++l) {
    dir.add("classifier.layers[" + std::to_string(l) + "].weight",
            model.classifier.layers[l].weight);
    dir.add("classifier.layers[" + std::to_string(l) + "].bias", model.classifier.layers[l].bias);
  }
  dir.add("coeffs", model.coeffs);
  dir.add("sigma2", model.sigma2);
  if (!model.standardizer.is_identity()) {
    dir.add("standardizer.center", model.standardizer.center);
    dir.add("standardizer.half", model.standardizer.half);
  }

  json header;
  header["format_version"] = kFormatVersion;
  header["architecture"] = architecture_name(model.architecture);
  header["input_dim"] = model.input_dim;
  header["clusters"] = model.clusters();
  header["sigma0_2"] = model.sigma0_2;
  header["sigma_floor2"] = model.sigma_floor2;
  header["basis"] = {
      {"family", model.basis.family() == BasisFamily::kChebyshev ? "chebyshev" : "monomial"},
      {"degree", model.basis.degree()},
      {"latent_dim", model.basis.latent_dim()},
      {"exponent_table", model.basis.exponent_table()},
  };
  if (model.has_encoder()) header["encoder"] = net_meta(model.encoder);
  header["classifier"] = net_meta(model.classifier);
  header["has_standardizer"] = !model.standardizer.is_identity();
  header["run_config"] = run_config_snapshot;
  header["arrays"] = dir.entries;

  const std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open '" + path + "' for writing");
  out << kMagic << " " << kFormatVersion << "\n" << header_text.size() << "\n" << header_text;
  out.write(reinterpret_cast<const char*>(dir.payload.data()),
            static_cast<std::streamsize>(dir.payload.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_model: write to '" + path + "' failed");
}

LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open '" + path + "'");
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) throw std::runtime_error("load_model: '" + path + "' is not a model file");
  if (version != kFormatVersion) {
    throw std::runtime_error("load_model: unsupported format version " + std::to_string(version));
  }
  std::size_t header_len = 0;
  in >> header_len;
  in.get();  // newline before the header text
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("load_model: truncated header in '" + path + "'");
  const json header = json::parse(header_text);

  std::vector<double> payload;
  {
    std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (rest.size() % sizeof(double) != 0) {
      throw std::runtime_error("load_model: payload size is not a multiple of 8");
    }
    payload.resize(rest.size() / sizeof(double));
    std::memcpy(payload.data(), rest.data(), rest.size());
  }

  LoadedModel loaded;
  loaded.format_version = version;
  loaded.run_config = header.value("run_config", json::object());
  PPOUModel& model = loaded.model;
  model.architecture = architecture_from(header.at("architecture").get<std::string>());
  model.input_dim = header.at("input_dim").get<int>();
  model.sigma0_2 = header.at("sigma0_2").get<double>();
  model.sigma_floor2 = header.at("sigma_floor2").get<double>();
  const json& b = header.at("basis");
  model.basis = PolyBasis(b.at("latent_dim").get<int>(), b.at("degree").get<int>(),
                          b.at("family").get<std::string>() == "chebyshev"
                              ? BasisFamily::kChebyshev
                              : BasisFamily::kMonomial);

  const ArrayReader reader(header.at("arrays"), payload);
  if (model.has_encoder()) {
    net_from_meta(header.at("encoder"), model.encoder);
    for (std::size_t l = 0; l < model.encoder.layers.size(); ++l) {
      model.encoder.layers[l].weight =
          reader.matrix("encoder.layers[" + std::to_string(l) + "].weight");
      model.encoder.layers[l].bias =
          reader.vector("encoder.layers[" + std::to_string(l) + "].bias");
    }
  }
  net_from_meta(header.at("classifier"), model.classifier);
  for (std::size_t l = 0; l < model.classifier.layers.size(); ++l) {
    model.classifier.layers[l].weight =
        reader.matrix("classifier.layers[" + std::to_string(l) + "].weight");
    model.classifier.layers[l].bias =
        reader.vector("classifier.layers[" + std::to_string(l) + "].bias");
  }
  model.coeffs = reader.matrix("coeffs");
  model.sigma2 = reader.vector("sigma2");
  if (header.value("has_standardizer", false)) {
    model.standardizer.center = reader.vector("standardizer.center");
    model.standardizer.half = reader.vector("standardizer.half");
  }
  return loaded;
}

}  // namespace ppou
