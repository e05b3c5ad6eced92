#include "json.hpp"

#include "qean/io.hpp"
#include "qean/model.hpp"

namespace qean {

namespace {

using nlohmann::json;

void malformed(const std::string& what) { throw Error(Errc::MalformedFile, what); }

#define QEAN_CONFIG_FIELDS(X)                                                                   \
  X(d_model) X(heads) X(decoder_heads) X(encoder_layers) X(decoder_layers) X(d_ff) X(periods)   \
  X(seed_motion_frames) X(audio_frames) X(future_frames) X(fps) X(use_learned_abs_pos)         \
  X(use_spe) X(use_qra) X(qra_same_axis) X(readout_residual) X(rotary_base) X(dropout)

json config_to_json(const ModelConfig& c) {
  json j;
#define X(name) j[#name] = c.name;
  QEAN_CONFIG_FIELDS(X)
#undef X
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
#define X(name)                                                           \
  if (!j.contains(#name)) malformed("checkpoint config lacks '" #name "'"); \
  j.at(#name).get_to(c.name);
  QEAN_CONFIG_FIELDS(X)
#undef X
  return c;
}

}  // namespace

std::string checkpoint_to_string(const ModelConfig& config, const ModelWeights& weights) {
  json tensors = json::object();
  for (const ConstNamedTensor& t : named_tensors(weights)) {
    json values = json::array();
    for (double v : t.tensor->values()) values.push_back(v);
    tensors[t.name] = {{"shape", {t.tensor->rows(), t.tensor->cols()}}, {"values", std::move(values)}};
  }
  json doc = {{"format", kCheckpointFormat}, {"config", config_to_json(config)}, {"tensors", tensors}};
  return doc.dump() + "\n";
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelWeights& weights) {
  write_file_atomic(path, checkpoint_to_string(config, weights));
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    malformed(std::string("checkpoint is not JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat)
      malformed(std::string("checkpoint format is not ") + kCheckpointFormat);
    Checkpoint ck;
    ck.config = config_from_json(doc.at("config"));
    try {
      ck.config.validate();
    } catch (const Error& e) {
      malformed(std::string("checkpoint config invalid: ") + e.what());
    }
    ck.weights = init_weights(ck.config, 0);
    const json& tensors = doc.at("tensors");
    auto named = named_tensors(ck.weights);
    if (tensors.size() != named.size()) malformed("checkpoint tensor count does not match config");
    for (NamedTensor& t : named) {
      if (!tensors.contains(t.name)) malformed("checkpoint lacks tensor " + t.name);
      const json& entry = tensors.at(t.name);
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto values = entry.at("values").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != t.tensor->rows() || shape[1] != t.tensor->cols() ||
          values.size() != t.tensor->size())
        malformed("tensor " + t.name + " has the wrong shape");
      std::copy(values.begin(), values.end(), t.tensor->values().begin());
    }
    return ck;
  } catch (const json::exception& e) {
    malformed(std::string("checkpoint structure: ") + e.what());
  }
  return {};
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_string(read_file(path));
}

}  // namespace qean
