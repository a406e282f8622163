#pragma once

// Per-candidate scores for both maps, their calibration, the joint product
// and greedy temporal NMS.

#include "dualmap/autograd.hpp"
#include "dualmap/data_model.hpp"
#include "dualmap/parameters.hpp"
#include "dualmap/temporal_maps.hpp"

#include <random>
#include <span>
#include <string>
#include <vector>

namespace dualmap {

inline constexpr double kScoreAmplification = 10.0;

struct HeadParams {
  // query projections d -> d_H
  ad::Var iou_query_w, iou_query_b, mm_query_w, mm_query_b;
  // 1x1 map convolutions d -> d_H
  ad::Var iou_map_w, iou_map_b, mm_map_w, mm_map_b;
  // conditioned map d_C -> 1
  ad::Var cond_fc_w, cond_fc_b;
  double exponent = 0.3;  // u

  static HeadParams init(int hidden, int cond_channels, int head_dim, double exponent,
                         std::mt19937_64& rng);
  void register_into(ParameterStore& store, const std::string& agnostic_group,
                     const std::string& conditioned_group) const;
};

/// Raw cosine scores on the valid cells of the query-agnostic map.
struct AgnosticScores {
  ad::Var s_iou;         // M x 1
  ad::Var s_mm;          // M x 1
  ad::Var moment_mm;     // M x d_H, unit rows
  ad::Var sentence_mm;   // 1 x d_H, unit row
  ad::Var moment_iou;    // M x d_H, unit rows
  ad::Var sentence_iou;  // 1 x d_H, unit row
};

/// Cosine similarity between 1x1-convolved cells and the projected query,
/// separately for the IoU and matching branches. Throws std::domain_error
/// when a projected vector has zero norm.
AgnosticScores score_agnostic_map(const TemporalMap2D& map, const ad::Var& query,
                                  const HeadParams& p);

double calibrate_mm(double s_mm, double exponent);  // (0.5 s + 0.5)^u
double calibrate_iou(double s_iou);                 // sigmoid(10 s)

struct AgnosticProbabilities {
  std::vector<double> p_iou, p_mm, p_a;
};
AgnosticProbabilities calibrate_agnostic(std::span<const double> s_iou,
                                         std::span<const double> s_mm, double exponent);

/// Raw conditioned score S_C = FC(cell) on every valid cell (M x 1).
ad::Var score_conditioned_map(const TemporalMap2D& map, const HeadParams& p);
/// sigmoid(10 * S_C), element-wise.
std::vector<double> calibrate_conditioned(std::span<const double> s_c);

/// p = p_A * p_C over the valid cells. Throws when the masks differ.
std::vector<double> combine_scores(std::span<const double> p_a, const ValidityMask& mask_a,
                                   std::span<const double> p_c, const ValidityMask& mask_c);

/// Full set of per-cell scores for one (video, query) pair.
struct ScoreMaps {
  ValidityMask mask;
  std::vector<double> s_iou, s_mm, p_iou, p_mm, p_a;
  std::vector<double> s_c, p_c;
  std::vector<double> p;
};

/// Greedy descending-score selection; a candidate is dropped when its IoU with
/// any survivor exceeds the threshold. Equal scores order by earlier start,
/// then shorter duration. At most max_keep survivors (0 = unlimited).
std::vector<ScoredInterval> nms_select(std::vector<ScoredInterval> candidates, double threshold,
                                       std::size_t max_keep = 0);

}  // namespace dualmap
