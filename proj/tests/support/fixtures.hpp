#pragma once

// Small configs and datasets shared by the harness tests and acceptance.

#include "dualmap/config.hpp"
#include "dualmap/synthetic.hpp"
#include "support/oracles.hpp"

#include <string>

namespace fixture {

inline dualmap::SyntheticSpec tiny_spec(int videos, int steps = 3) {
  dualmap::SyntheticSpec s;
  s.video_count = videos;
  s.clips_per_video = 24;
  s.steps_per_video = steps;
  s.feature_dim = 16;
  s.noise = 0.05;
  return s;
}

inline dualmap::TrainConfig tiny_config(int video_dim = 16) {
  dualmap::TrainConfig c = dualmap::preset("small");
  c.model.encoder.hidden = 16;
  c.model.encoder.ffn_hidden = 32;
  c.model.encoder.heads = 2;
  c.model.encoder.layers = 1;
  c.model.encoder.sampled_clips = 8;
  c.model.encoder.video_dim = video_dim;
  c.model.short_tier = 4;
  c.model.maps.conditioned_channels = 8;
  c.model.head_dim = 16;
  c.batch_size = 4;
  c.epochs = 1;
  c.seed = 3;
  return c;
}

inline dualmap::Manifest tiny_dataset(const std::string& name, int videos, std::uint64_t seed = 7,
                                      int steps = 3) {
  return dualmap::generate_synthetic_dataset(tiny_spec(videos, steps), seed, oracle::temp_dir(name));
}

}  // namespace fixture
