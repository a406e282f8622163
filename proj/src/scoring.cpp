#include "dualmap/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dualmap {

HeadParams HeadParams::init(int hidden, int cond_channels, int head_dim, double exponent,
                            std::mt19937_64& rng) {
  if (head_dim < 1) throw std::invalid_argument("d_H must be >= 1");
  if (!(exponent > 0.0 && exponent <= 1.0)) throw std::invalid_argument("u must be in (0,1]");
  HeadParams p;
  p.iou_query_w = xavier_parameter(hidden, head_dim, rng);
  p.iou_query_b = zeros_parameter(1, head_dim);
  p.mm_query_w = xavier_parameter(hidden, head_dim, rng);
  p.mm_query_b = zeros_parameter(1, head_dim);
  p.iou_map_w = xavier_parameter(hidden, head_dim, rng);
  p.iou_map_b = zeros_parameter(1, head_dim);
  p.mm_map_w = xavier_parameter(hidden, head_dim, rng);
  p.mm_map_b = zeros_parameter(1, head_dim);
  p.cond_fc_w = xavier_parameter(cond_channels, 1, rng);
  p.cond_fc_b = zeros_parameter(1, 1);
  p.exponent = exponent;
  return p;
}

void HeadParams::register_into(ParameterStore& store, const std::string& agnostic_group,
                               const std::string& conditioned_group) const {
  store.add(agnostic_group, "head.iou_query_w", iou_query_w);
  store.add(agnostic_group, "head.iou_query_b", iou_query_b);
  store.add(agnostic_group, "head.iou_map_w", iou_map_w);
  store.add(agnostic_group, "head.iou_map_b", iou_map_b);
  store.add(agnostic_group, "head.mm_query_w", mm_query_w);
  store.add(agnostic_group, "head.mm_query_b", mm_query_b);
  store.add(agnostic_group, "head.mm_map_w", mm_map_w);
  store.add(agnostic_group, "head.mm_map_b", mm_map_b);
  store.add(conditioned_group, "head.cond_fc_w", cond_fc_w);
  store.add(conditioned_group, "head.cond_fc_b", cond_fc_b);
}

AgnosticScores score_agnostic_map(const TemporalMap2D& map, const ad::Var& query,
                                  const HeadParams& p) {
  using namespace ad;
  if (query.rows() != 1 || query.cols() != p.iou_query_w.rows())
    throw std::invalid_argument("score_agnostic_map: query must be 1 x d");
  if (map.channels() != p.iou_map_w.rows())
    throw std::invalid_argument("score_agnostic_map: map channels differ from d");
  // 1x1 convolutions, valid cells only
  Var cells = gather_rows(map.features, map.mask.flat_indices());
  AgnosticScores s;
  s.moment_iou = l2_normalize_rows(add_row(matmul(cells, p.iou_map_w), p.iou_map_b));
  s.moment_mm = l2_normalize_rows(add_row(matmul(cells, p.mm_map_w), p.mm_map_b));
  s.sentence_iou = l2_normalize_rows(add_row(matmul(query, p.iou_query_w), p.iou_query_b));
  s.sentence_mm = l2_normalize_rows(add_row(matmul(query, p.mm_query_w), p.mm_query_b));
  s.s_iou = matmul(s.moment_iou, transpose(s.sentence_iou));
  s.s_mm = matmul(s.moment_mm, transpose(s.sentence_mm));
  return s;
}

double calibrate_mm(double s_mm, double exponent) {
  const double base = std::clamp(0.5 * s_mm + 0.5, 0.0, 1.0);
  return std::pow(base, exponent);
}

double calibrate_iou(double s_iou) { return 1.0 / (1.0 + std::exp(-kScoreAmplification * s_iou)); }

AgnosticProbabilities calibrate_agnostic(std::span<const double> s_iou,
                                         std::span<const double> s_mm, double exponent) {
  if (s_iou.size() != s_mm.size())
    throw std::invalid_argument("calibrate_agnostic: score vectors differ in length");
  AgnosticProbabilities out;
  out.p_iou.reserve(s_iou.size());
  out.p_mm.reserve(s_iou.size());
  out.p_a.reserve(s_iou.size());
  for (std::size_t i = 0; i < s_iou.size(); ++i) {
    out.p_iou.push_back(calibrate_iou(s_iou[i]));
    out.p_mm.push_back(calibrate_mm(s_mm[i], exponent));
    out.p_a.push_back(out.p_mm.back() * out.p_iou.back());
  }
  return out;
}

ad::Var score_conditioned_map(const TemporalMap2D& map, const HeadParams& p) {
  if (map.channels() != p.cond_fc_w.rows())
    throw std::invalid_argument("score_conditioned_map: map channels differ from d_C");
  ad::Var cells = ad::gather_rows(map.features, map.mask.flat_indices());
  return ad::add_row(ad::matmul(cells, p.cond_fc_w), p.cond_fc_b);
}

std::vector<double> calibrate_conditioned(std::span<const double> s_c) {
  std::vector<double> out;
  out.reserve(s_c.size());
  for (double s : s_c) out.push_back(calibrate_iou(s));
  return out;
}

std::vector<double> combine_scores(std::span<const double> p_a, const ValidityMask& mask_a,
                                   std::span<const double> p_c, const ValidityMask& mask_c) {
  if (!(mask_a == mask_c)) throw std::invalid_argument("combine_scores: masks differ");
  if (p_a.size() != static_cast<std::size_t>(mask_a.count()) || p_c.size() != p_a.size())
    throw std::invalid_argument("combine_scores: score count differs from valid cell count");
  std::vector<double> p(p_a.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = p_a[i] * p_c[i];
  return p;
}

std::vector<ScoredInterval> nms_select(std::vector<ScoredInterval> candidates, double threshold,
                                       std::size_t max_keep) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const ScoredInterval& x, const ScoredInterval& y) {
                     if (x.score != y.score) return x.score > y.score;
                     if (x.interval.start() != y.interval.start())
                       return x.interval.start() < y.interval.start();
                     return x.interval.length() < y.interval.length();
                   });
  std::vector<ScoredInterval> kept;
  for (const auto& c : candidates) {
    if (max_keep != 0 && kept.size() >= max_keep) break;
    bool suppressed = false;
    for (const auto& k : kept) {
      double iou;
      try {
        iou = temporal_iou(c.interval, k.interval);
      } catch (const std::domain_error&) {
        // two zero-length intervals: duplicates only when they coincide
        iou = c.interval == k.interval ? 1.0 : 0.0;
      }
      if (iou > threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

}  // namespace dualmap
