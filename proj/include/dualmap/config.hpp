#pragma once

#include "dualmap/encoders.hpp"
#include "dualmap/objectives.hpp"
#include "dualmap/temporal_maps.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace dualmap {

/// Which map scores feed the joint prediction. Single-path modes override the
/// other path's score with 1 and drop its loss terms.
enum class PathMode { kDual, kAgnosticOnly, kConditionedOnly };

struct ModelConfig {
  EncoderConfig encoder;
  MapConvConfig maps;
  int short_tier = 8;  // G in the validity mask rule
  int head_dim = 64;   // d_H
  double exponent = 0.3;
  Aggregation aggregation = Aggregation::kOuterProduct;
  PathMode path = PathMode::kDual;

  void validate() const;
};

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  double learning_rate = 1e-4;
  int batch_size = 8;
  int epochs = 10;
  int max_steps = 0;  // 0 = run all epochs
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double nms_threshold = 0.4;
  std::string token_table;  // used by the pretrained-files backend

  void validate() const;
};

/// Named presets: "desk" (default sizes), "large" (wide encoders, N = 64) and
/// "small" (fast single-core runs used by the learnability checks).
TrainConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Flat key/value view; every key is also a CLI flag.
nlohmann::json to_json(const TrainConfig& cfg);
/// Applies the keys present in j on top of base. Unknown keys are rejected.
TrainConfig apply_json(const TrainConfig& base, const nlohmann::json& j);

std::string to_string(Aggregation a);
std::string to_string(PathMode p);
std::string to_string(EmbeddingBackend b);

}  // namespace dualmap
