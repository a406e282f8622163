#pragma once

#include "dualmap/config.hpp"
#include "dualmap/encoders.hpp"
#include "dualmap/parameters.hpp"
#include "dualmap/scoring.hpp"
#include "dualmap/temporal_maps.hpp"

#include <cstdint>
#include <string>

namespace dualmap {

/// The dual-path grounding network: shared encoders, a query-agnostic map
/// scored by cosine heads and a query-conditioned map scored by regression.
class GroundingModel {
 public:
  GroundingModel(ModelConfig cfg, TokenEmbedder embedder, std::uint64_t seed);
  GroundingModel(const GroundingModel&) = delete;
  GroundingModel& operator=(const GroundingModel&) = delete;
  GroundingModel(GroundingModel&&) = default;
  GroundingModel& operator=(GroundingModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  const TokenEmbedder& embedder() const { return embedder_; }
  const ValidityMask& mask() const { return mask_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  /// Video-only computations, shared by every query on the same video.
  struct VideoPass {
    ad::Var clips;           // N x d
    TemporalMap2D agnostic;  // after the agnostic convolutions
  };
  VideoPass forward_video(const ad::Matrix& raw, const DropoutSource* dropout = nullptr) const;
  ad::Var forward_query(const std::string& sentence, const DropoutSource* dropout = nullptr) const;

  struct PairPass {
    AgnosticScores agnostic;  // undefined Vars in conditioned-only mode
    ad::Var s_c;              // M x 1 raw conditioned scores; undefined in agnostic-only mode
  };
  PairPass forward_pair(const VideoPass& video, const ad::Var& query) const;

  /// Unit-norm matching-space sentence feature (1 x d_H).
  ad::Var sentence_mm(const ad::Var& query) const;

  /// Inference: every per-cell score for one pair, no autodiff history.
  ScoreMaps score(const ad::Matrix& raw, const std::string& sentence) const;
  ScoreMaps score(const VideoPass& video, const std::string& sentence) const;

 private:
  ModelConfig cfg_;
  TokenEmbedder embedder_;
  ValidityMask mask_;
  SequenceEncoderParams video_encoder_;
  SequenceEncoderParams query_encoder_;
  MapConvParams agnostic_conv_;
  FusionParams fusion_;
  MapConvParams conditioned_conv_;
  HeadParams heads_;
  ParameterStore store_;
};

}  // namespace dualmap
