#include "acap/errors.hpp"
#include "acap/model.hpp"

namespace acap {

namespace {

constexpr const char* kFormat = "acap-checkpoint";
constexpr int kVersion = 1;

nlohmann::json dump_tensors(const std::vector<nn::ParamRef>& refs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : refs) {
    const nn::Matrix& m = *r.value;
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) values.push_back(m(i, j));
    }
    out.push_back({{"name", r.name}, {"shape", {m.rows(), m.cols()}}, {"values", values}});
  }
  return out;
}

void load_tensors(const nlohmann::json& tensors, const std::vector<nn::ParamRef>& refs) {
  if (!tensors.is_array() || tensors.size() != refs.size()) {
    throw ParseError("checkpoint tensor list does not match the model");
  }
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto& t = tensors[k];
    nn::Matrix& m = *refs[k].value;
    if (t.at("name").get<std::string>() != refs[k].name) {
      throw ParseError("checkpoint tensor " + std::to_string(k) + " should be " + refs[k].name);
    }
    const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
    const auto values = t.at("values").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols() ||
        static_cast<Eigen::Index>(values.size()) != m.size()) {
      throw ParseError("checkpoint tensor " + refs[k].name + " has the wrong shape");
    }
    std::size_t v = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = values[v++];
    }
  }
}

}  // namespace

nlohmann::json save_checkpoint(Network& net) {
  return {{"format", kFormat},
          {"version", kVersion},
          {"kind", net.kind()},
          {"config", net.config_json()},
          {"params", dump_tensors(net.params())},
          {"buffers", dump_tensors(net.buffers())}};
}

std::unique_ptr<Network> load_checkpoint(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kFormat) throw ParseError("not an ACAP checkpoint");
    if (doc.at("version").get<int>() != kVersion) {
      throw ParseError("unsupported checkpoint version");
    }
    const std::string kind = doc.at("kind").get<std::string>();
    const auto& cfg = doc.at("config");
    std::mt19937_64 rng(0);
    std::unique_ptr<Network> net;
    if (kind == "acap") {
      FeatureGroups g;
      const auto& gj = cfg.at("groups");
      g.temporal = gj.at("temporal").get<bool>();
      g.accident = gj.at("accident").get<bool>();
      g.regional = gj.at("regional").get<bool>();
      net = std::make_unique<AcapNetwork>(AcapDims::from_json(cfg.at("dims")), rng, g);
    } else if (kind == "dnn") {
      net = std::make_unique<DnnNetwork>(cfg.at("input_dim").get<int>(), rng,
                                         cfg.at("hidden").get<std::vector<int>>());
    } else {
      throw ParseError("unknown model kind '" + kind + "'");
    }
    load_tensors(doc.at("params"), net->params());
    load_tensors(doc.at("buffers"), net->buffers());
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace acap
