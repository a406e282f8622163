#pragma once

// Training targets and losses: scaled-IoU targets, binary cross-entropy IoU
// regression and the bidirectional moment/sentence matching loss.

#include "dualmap/autograd.hpp"

#include <span>
#include <string>
#include <vector>

namespace dualmap {

struct LossConfig {
  double t_min = 0.3;
  double t_max = 0.7;
  double lambda = 0.01;       // weight of the matching loss
  double tau_v = 0.05;        // temperature, moment -> sentence direction
  double tau_s = 0.05;        // temperature, sentence -> moment direction
  double margin = 0.1;        // subtracted from the positive logit
  double neg_iou_bound = 0.5; // same-video cells below this IoU are negatives
  int intra_negative_cap = 32;

  void validate() const;
};

/// 0 at or below t_min, 1 at or above t_max, linear in between.
double scale_iou(double o, double t_min, double t_max);

/// Mean BCE over the valid cells. Throws std::invalid_argument on length
/// mismatch, empty input, or a prediction outside (0,1).
double iou_bce_loss(std::span<const double> p, std::span<const double> y);
/// d(iou_bce_loss)/dp.
std::vector<double> iou_bce_loss_grad(std::span<const double> p, std::span<const double> y);

/// One positive (moment, sentence) pair with its same-video negatives. All
/// features are unit rows in the matching space.
struct MatchingItem {
  ad::Var moment;           // 1 x h
  ad::Var sentence;         // 1 x h
  ad::Var intra_moments;    // k x h, may be undefined or have zero rows
  ad::Var intra_sentences;  // k x h, may be undefined or have zero rows
  std::string video_id;
  std::string sentence_text;  // normalized; equal texts are never negatives of each other
  std::string moment_key;     // equal non-empty keys within a video name the same moment
};

struct MatchingStats {
  int positives = 0;
  int degenerate_directions = 0;  // directions whose negative pool was empty
};

/// Mean over positives of -log p(i_v|s_i) - log p(i_s|v_i). Each direction
/// uses a margin-shifted positive logit against its negative pool: the other
/// items' sentences plus intra sentences for p(i_s|v), the moments of items
/// from other videos plus intra moments for p(i_v|s). Repeated batch entries
/// enter a pool once. An empty pool contributes exactly 0.
ad::Var mutual_matching_loss(std::span<const MatchingItem> batch, const LossConfig& cfg,
                             MatchingStats* stats = nullptr);

/// L_iou + lambda * L_mm + L_C.
double total_loss(double iou_agnostic, double mm, double iou_conditioned, double lambda);
ad::Var total_loss(const ad::Var& iou_agnostic, const ad::Var& mm, const ad::Var& iou_conditioned,
                   double lambda);

}  // namespace dualmap
