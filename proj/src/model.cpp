#include "dualmap/model.hpp"

#include <random>

namespace dualmap {

GroundingModel::GroundingModel(ModelConfig cfg, TokenEmbedder embedder, std::uint64_t seed)
    : cfg_(std::move(cfg)), embedder_(std::move(embedder)) {
  cfg_.validate();
  const auto& e = cfg_.encoder;
  const auto& m = cfg_.maps;
  mask_ = build_validity_mask(e.sampled_clips, cfg_.short_tier);

  std::mt19937_64 rng(seed);
  video_encoder_ = SequenceEncoderParams::init(e.video_dim, e, rng);
  query_encoder_ = SequenceEncoderParams::init(EncoderConfig::kTokenDim, e, rng);
  agnostic_conv_ = MapConvParams::init(m.agnostic_layers, m.agnostic_kernel, e.hidden, rng);
  fusion_ = FusionParams::init(e.hidden, m.conditioned_channels, rng);
  conditioned_conv_ =
      MapConvParams::init(m.conditioned_layers, m.conditioned_kernel, m.conditioned_channels, rng);
  heads_ = HeadParams::init(e.hidden, m.conditioned_channels, cfg_.head_dim, cfg_.exponent, rng);

  video_encoder_.register_into(store_, "video_encoder");
  query_encoder_.register_into(store_, "query_encoder");
  agnostic_conv_.register_into(store_, "agnostic_map");
  fusion_.register_into(store_, "conditioned_map");
  conditioned_conv_.register_into(store_, "conditioned_map");
  heads_.register_into(store_, "agnostic_head", "conditioned_head");
}

GroundingModel::VideoPass GroundingModel::forward_video(const ad::Matrix& raw,
                                                        const DropoutSource* dropout) const {
  VideoPass v;
  v.clips = encode_video(raw, video_encoder_, cfg_.encoder, dropout);
  if (cfg_.path != PathMode::kConditionedOnly)
    v.agnostic = apply_map_convnet(aggregate(cfg_.aggregation, v.clips, mask_), agnostic_conv_);
  return v;
}

ad::Var GroundingModel::forward_query(const std::string& sentence,
                                      const DropoutSource* dropout) const {
  return encode_query(sentence, embedder_, query_encoder_, cfg_.encoder, dropout);
}

GroundingModel::PairPass GroundingModel::forward_pair(const VideoPass& video,
                                                      const ad::Var& query) const {
  PairPass p;
  if (cfg_.path != PathMode::kConditionedOnly)
    p.agnostic = score_agnostic_map(video.agnostic, query, heads_);
  if (cfg_.path != PathMode::kAgnosticOnly) {
    ad::Var fused = fuse_multimodal(video.clips, query, fusion_);
    // the conditioned map always aggregates by outer product
    TemporalMap2D cond = apply_map_convnet(aggregate_outer_product(fused, mask_), conditioned_conv_);
    p.s_c = score_conditioned_map(cond, heads_);
  }
  return p;
}

ad::Var GroundingModel::sentence_mm(const ad::Var& query) const {
  return ad::l2_normalize_rows(
      ad::add_row(ad::matmul(query, heads_.mm_query_w), heads_.mm_query_b));
}

namespace {

std::vector<double> column(const ad::Var& v) {
  const auto& m = v.value();
  return {m.data(), m.data() + m.size()};
}

}  // namespace

ScoreMaps GroundingModel::score(const ad::Matrix& raw, const std::string& sentence) const {
  ad::NoGradGuard no_grad;
  return score(forward_video(raw), sentence);
}

ScoreMaps GroundingModel::score(const VideoPass& video, const std::string& sentence) const {
  ad::NoGradGuard no_grad;
  const PairPass pair = forward_pair(video, forward_query(sentence));
  const auto m = static_cast<std::size_t>(mask_.count());

  ScoreMaps s;
  s.mask = mask_;
  if (cfg_.path != PathMode::kConditionedOnly) {
    s.s_iou = column(pair.agnostic.s_iou);
    s.s_mm = column(pair.agnostic.s_mm);
    auto cal = calibrate_agnostic(s.s_iou, s.s_mm, cfg_.exponent);
    s.p_iou = std::move(cal.p_iou);
    s.p_mm = std::move(cal.p_mm);
    s.p_a = std::move(cal.p_a);
  } else {
    s.p_a.assign(m, 1.0);
  }
  if (cfg_.path != PathMode::kAgnosticOnly) {
    s.s_c = column(pair.s_c);
    s.p_c = calibrate_conditioned(s.s_c);
  } else {
    s.p_c.assign(m, 1.0);
  }
  s.p = combine_scores(s.p_a, mask_, s.p_c, mask_);
  return s;
}

}  // namespace dualmap
