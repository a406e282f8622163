#include "dualmap/config.hpp"

#include <stdexcept>

namespace dualmap {

using nlohmann::json;

void ModelConfig::validate() const {
  encoder.validate();
  maps.validate();
  if (short_tier < 1 || short_tier > encoder.sampled_clips)
    throw std::invalid_argument("short_tier must be in [1, N]");
  if (head_dim < 1) throw std::invalid_argument("head_dim must be >= 1");
  if (!(exponent > 0.0 && exponent <= 1.0)) throw std::invalid_argument("exponent must be in (0,1]");
}

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (!(learning_rate > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  if (epochs < 0 || max_steps < 0) throw std::invalid_argument("epochs/max_steps must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("Adam betas must be in [0,1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be > 0");
  if (!(nms_threshold > 0.0 && nms_threshold <= 1.0))
    throw std::invalid_argument("nms_threshold must be in (0,1]");
  if (model.encoder.backend == EmbeddingBackend::kPretrainedFiles && token_table.empty())
    throw std::invalid_argument("the pretrained-files backend needs token_table");
}

TrainConfig preset(const std::string& name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name == "large") {
    c.model.encoder.hidden = 512;
    c.model.encoder.ffn_hidden = 2048;
    c.model.encoder.heads = 8;
    c.model.encoder.sampled_clips = 64;  // not reported; assumed
    c.model.encoder.video_dim = 1024;
    c.model.maps.conditioned_channels = 128;
    c.model.head_dim = 256;
    return c;
  }
  if (name == "small") {
    c.model.encoder.hidden = 32;
    c.model.encoder.ffn_hidden = 64;
    c.model.encoder.heads = 4;
    c.model.encoder.sampled_clips = 16;
    c.model.maps.conditioned_channels = 16;
    c.model.head_dim = 32;
    c.model.short_tier = 8;
    c.learning_rate = 1e-3;
    return c;
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() { return {"desk", "large", "small"}; }

std::string to_string(Aggregation a) {
  return a == Aggregation::kOuterProduct ? "outer_product" : "max_pool";
}

std::string to_string(PathMode p) {
  switch (p) {
    case PathMode::kDual: return "dual";
    case PathMode::kAgnosticOnly: return "agnostic_only";
    case PathMode::kConditionedOnly: return "conditioned_only";
  }
  return "dual";
}

std::string to_string(EmbeddingBackend b) {
  return b == EmbeddingBackend::kSynthetic ? "synthetic" : "pretrained-files";
}

namespace {

Aggregation parse_aggregation(const std::string& s) {
  if (s == "outer_product") return Aggregation::kOuterProduct;
  if (s == "max_pool") return Aggregation::kMaxPool;
  throw std::invalid_argument("aggregation must be outer_product or max_pool, got '" + s + "'");
}

PathMode parse_path(const std::string& s) {
  if (s == "dual") return PathMode::kDual;
  if (s == "agnostic_only") return PathMode::kAgnosticOnly;
  if (s == "conditioned_only") return PathMode::kConditionedOnly;
  throw std::invalid_argument("path must be dual, agnostic_only or conditioned_only, got '" + s +
                              "'");
}

EmbeddingBackend parse_backend(const std::string& s) {
  if (s == "synthetic") return EmbeddingBackend::kSynthetic;
  if (s == "pretrained-files") return EmbeddingBackend::kPretrainedFiles;
  throw std::invalid_argument("backend must be synthetic or pretrained-files, got '" + s + "'");
}

}  // namespace

json to_json(const TrainConfig& c) {
  const auto& e = c.model.encoder;
  const auto& m = c.model.maps;
  const auto& l = c.loss;
  return json{
      {"lr", c.learning_rate},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"max_steps", c.max_steps},
      {"seed", c.seed},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"adam_eps", c.adam_eps},
      {"nms_threshold", c.nms_threshold},
      {"token_table", c.token_table},
      {"clips", e.sampled_clips},
      {"short_tier", c.model.short_tier},
      {"hidden", e.hidden},
      {"video_dim", e.video_dim},
      {"layers", e.layers},
      {"heads", e.heads},
      {"ffn_hidden", e.ffn_hidden},
      {"dropout", e.dropout},
      {"max_positions", e.max_positions},
      {"backend", to_string(e.backend)},
      {"agnostic_layers", m.agnostic_layers},
      {"agnostic_kernel", m.agnostic_kernel},
      {"conditioned_layers", m.conditioned_layers},
      {"conditioned_kernel", m.conditioned_kernel},
      {"conditioned_channels", m.conditioned_channels},
      {"head_dim", c.model.head_dim},
      {"exponent", c.model.exponent},
      {"aggregation", to_string(c.model.aggregation)},
      {"path", to_string(c.model.path)},
      {"t_min", l.t_min},
      {"t_max", l.t_max},
      {"lambda", l.lambda},
      {"tau_v", l.tau_v},
      {"tau_s", l.tau_s},
      {"margin", l.margin},
      {"neg_iou_bound", l.neg_iou_bound},
      {"intra_negative_cap", l.intra_negative_cap},
  };
}

TrainConfig apply_json(const TrainConfig& base, const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  TrainConfig c = base;
  auto& e = c.model.encoder;
  auto& m = c.model.maps;
  auto& l = c.loss;
  const json known = to_json(base);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown config key '" + key + "'");
    try {
      if (key == "lr") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "max_steps") c.max_steps = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "adam_eps") c.adam_eps = value.get<double>();
      else if (key == "nms_threshold") c.nms_threshold = value.get<double>();
      else if (key == "token_table") c.token_table = value.get<std::string>();
      else if (key == "clips") e.sampled_clips = value.get<int>();
      else if (key == "short_tier") c.model.short_tier = value.get<int>();
      else if (key == "hidden") e.hidden = value.get<int>();
      else if (key == "video_dim") e.video_dim = value.get<int>();
      else if (key == "layers") e.layers = value.get<int>();
      else if (key == "heads") e.heads = value.get<int>();
      else if (key == "ffn_hidden") e.ffn_hidden = value.get<int>();
      else if (key == "dropout") e.dropout = value.get<double>();
      else if (key == "max_positions") e.max_positions = value.get<int>();
      else if (key == "backend") e.backend = parse_backend(value.get<std::string>());
      else if (key == "agnostic_layers") m.agnostic_layers = value.get<int>();
      else if (key == "agnostic_kernel") m.agnostic_kernel = value.get<int>();
      else if (key == "conditioned_layers") m.conditioned_layers = value.get<int>();
      else if (key == "conditioned_kernel") m.conditioned_kernel = value.get<int>();
      else if (key == "conditioned_channels") m.conditioned_channels = value.get<int>();
      else if (key == "head_dim") c.model.head_dim = value.get<int>();
      else if (key == "exponent") c.model.exponent = value.get<double>();
      else if (key == "aggregation") c.model.aggregation = parse_aggregation(value.get<std::string>());
      else if (key == "path") c.model.path = parse_path(value.get<std::string>());
      else if (key == "t_min") l.t_min = value.get<double>();
      else if (key == "t_max") l.t_max = value.get<double>();
      else if (key == "lambda") l.lambda = value.get<double>();
      else if (key == "tau_v") l.tau_v = value.get<double>();
      else if (key == "tau_s") l.tau_s = value.get<double>();
      else if (key == "margin") l.margin = value.get<double>();
      else if (key == "neg_iou_bound") l.neg_iou_bound = value.get<double>();
      else if (key == "intra_negative_cap") l.intra_negative_cap = value.get<int>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config key '" + key + "' has the wrong type");
    }
  }
  return c;
}

}  // namespace dualmap
