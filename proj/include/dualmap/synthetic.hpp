#pragma once

// Deterministic desk-scale grounding datasets. Every clip of a video shares
// a background vector; clips inside a step add a small action-code offset
// (scaled by code_scale) plus Gaussian noise. Each step's query sentence is a
// fixed phrase for its action code, and its ground truth is the step span.

#include "dualmap/data_model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dualmap {

struct StepSpan {
  int first_clip = 0;
  int clip_count = 1;
  int code = 0;  // index into the action-code phrases
};

std::vector<std::string> default_action_phrases();

struct SyntheticSpec {
  int video_count = 40;
  int clips_per_video = 64;       // raw clip count T
  int clip_jitter = 0;            // T drawn uniformly from clips_per_video +/- jitter
  int steps_per_video = 8;
  std::vector<std::string> action_phrases = default_action_phrases();
  double noise = 0.1;             // per-value Gaussian noise
  double code_scale = 1.0;        // epsilon on the action-code vector
  double video_jitter = 0.5;      // per-video deviation from the shared background
  int feature_dim = 64;           // d_v
  double clip_seconds = 1.0;
  double coverage = 0.85;         // fraction of clips inside some step
  // Optional explicit step layouts, one per video; overrides the random layout.
  std::vector<std::vector<StepSpan>> layouts;

  void validate() const;
};

/// Writes <out_dir>/manifest.json and <out_dir>/features/<video_id>.feat and
/// returns the loaded manifest. Byte-identical output for equal (spec, seed).
/// Throws std::invalid_argument for invalid specs, overlapping steps included.
Manifest generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed,
                                    const std::filesystem::path& out_dir);

}  // namespace dualmap
