#include <fstream>

#include <json.hpp>

#include "debiascope/encoder.hpp"

namespace debiascope::encoder {

using json = nlohmann::json;

namespace {
constexpr int kCheckpointVersion = 1;

json config_to_json(const EncoderConfig& c) {
  return json{{"dim", c.dim},       {"layers", c.layers},
              {"heads", c.heads},   {"ff_hidden", c.ff_hidden},
              {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.dim = j.at("dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ff_hidden = j.at("ff_hidden").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  return c;
}
}  // namespace

void save_checkpoint(const EncoderParams& params, const std::string& path) {
  json j;
  j["format"] = "debiascope-encoder";
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(params.config);
  json tensors = json::object();
  for (const auto& [name, t] : params.tensors) {
    tensors[name] = json{{"shape", t.shape}, {"data", t.data}};
  }
  j["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("save_checkpoint: cannot open " + path);
  out << j.dump();
}

EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_checkpoint: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::invalid_argument("load_checkpoint: " + path + ": " + e.what());
  }
  if (j.value("format", "") != "debiascope-encoder")
    throw std::invalid_argument("load_checkpoint: " + path + " is not an encoder checkpoint");
  if (j.value("version", -1) != kCheckpointVersion)
    throw std::invalid_argument("load_checkpoint: unsupported checkpoint version");
  EncoderParams p;
  p.config = config_from_json(j.at("config"));
  p.config.validate();
  for (const auto& [name, tj] : j.at("tensors").items()) {
    nd::Shape shape = tj.at("shape").get<nd::Shape>();
    std::vector<double> data = tj.at("data").get<std::vector<double>>();
    p.tensors[name] = nd::Tensor(std::move(shape), std::move(data));
  }
  // round-trip through the builder validates completeness and shapes
  nd::Graph probe;
  build_encoder(probe, p);
  return p;
}

EncoderParams load_checkpoint(const std::string& path, const EncoderConfig& expected) {
  EncoderParams p = load_checkpoint(path);
  if (!(p.config == expected))
    throw std::invalid_argument("load_checkpoint: " + path + " config does not match the requested configuration");
  return p;
}

}  // namespace debiascope::encoder
