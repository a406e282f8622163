#include "dualmap/objectives.hpp"

#include <cmath>
#include <set>
#include <stdexcept>
#include <utility>

namespace dualmap {

void LossConfig::validate() const {
  if (!(0.0 <= t_min && t_min < t_max && t_max <= 1.0))
    throw std::invalid_argument("need 0 <= t_min < t_max <= 1");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (!(tau_v > 0.0 && tau_s > 0.0)) throw std::invalid_argument("temperatures must be > 0");
  if (margin < 0.0) throw std::invalid_argument("margin must be >= 0");
  if (!(neg_iou_bound > 0.0 && neg_iou_bound < 1.0))
    throw std::invalid_argument("neg_iou_bound must be in (0,1)");
  if (intra_negative_cap < 0) throw std::invalid_argument("intra negative cap must be >= 0");
}

double scale_iou(double o, double t_min, double t_max) {
  if (!(t_min < t_max)) throw std::invalid_argument("scale_iou: t_min must be below t_max");
  if (o <= t_min) return 0.0;
  if (o >= t_max) return 1.0;
  return (o - t_min) / (t_max - t_min);
}

namespace {

void check_bce_inputs(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size()) throw std::invalid_argument("iou_bce_loss: length mismatch");
  if (p.empty()) throw std::invalid_argument("iou_bce_loss: no valid cells");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0 && p[i] < 1.0))
      throw std::invalid_argument("iou_bce_loss: prediction " + std::to_string(i) +
                                  " outside (0,1)");
    if (!(y[i] >= 0.0 && y[i] <= 1.0))
      throw std::invalid_argument("iou_bce_loss: target " + std::to_string(i) + " outside [0,1]");
  }
}

}  // namespace

double iou_bce_loss(std::span<const double> p, std::span<const double> y) {
  check_bce_inputs(p, y);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    total -= y[i] * std::log(p[i]) + (1.0 - y[i]) * std::log1p(-p[i]);
  return total / static_cast<double>(p.size());
}

std::vector<double> iou_bce_loss_grad(std::span<const double> p, std::span<const double> y) {
  check_bce_inputs(p, y);
  const double inv_m = 1.0 / static_cast<double>(p.size());
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = inv_m * (p[i] - y[i]) / (p[i] * (1.0 - p[i]));
  return g;
}

namespace {

bool has_rows(const ad::Var& v) { return v.defined() && v.rows() > 0; }

// Column of dot products [anchor·positive; anchor·negatives...].
ad::Var logits_column(const ad::Var& anchor, const ad::Var& positive,
                      const std::vector<ad::Var>& negatives) {
  std::vector<ad::Var> rows{positive};
  rows.insert(rows.end(), negatives.begin(), negatives.end());
  return ad::matmul(ad::concat_rows(rows), ad::transpose(anchor));
}

}  // namespace

ad::Var mutual_matching_loss(std::span<const MatchingItem> batch, const LossConfig& cfg,
                             MatchingStats* stats) {
  if (batch.empty()) throw std::invalid_argument("mutual_matching_loss: empty batch");
  MatchingStats local;
  std::vector<ad::Var> terms;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const MatchingItem& item = batch[i];
    std::vector<ad::Var> neg_sentences, neg_moments;
    std::set<std::string> seen_texts{item.sentence_text};
    std::set<std::pair<std::string, std::string>> seen_moments;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const MatchingItem& other = batch[j];
      if (j == i || other.sentence_text == item.sentence_text) continue;
      if (seen_texts.insert(other.sentence_text).second) neg_sentences.push_back(other.sentence);
      if (other.video_id == item.video_id) continue;
      if (other.moment_key.empty() || seen_moments.emplace(other.video_id, other.moment_key).second)
        neg_moments.push_back(other.moment);
    }
    if (has_rows(item.intra_sentences)) neg_sentences.push_back(item.intra_sentences);
    if (has_rows(item.intra_moments)) neg_moments.push_back(item.intra_moments);

    // p(i_s | v): the moment ranks sentences
    if (neg_sentences.empty()) ++local.degenerate_directions;
    terms.push_back(ad::margin_softmax_nll(logits_column(item.moment, item.sentence, neg_sentences),
                                           cfg.margin, cfg.tau_v));
    // p(i_v | s): the sentence ranks moments
    if (neg_moments.empty()) ++local.degenerate_directions;
    terms.push_back(ad::margin_softmax_nll(logits_column(item.sentence, item.moment, neg_moments),
                                           cfg.margin, cfg.tau_s));
    ++local.positives;
  }
  ad::Var stacked = ad::concat_rows(terms);
  if (stats) *stats = local;
  return ad::scale(ad::sum(stacked), 1.0 / static_cast<double>(batch.size()));
}

double total_loss(double iou_agnostic, double mm, double iou_conditioned, double lambda) {
  return iou_agnostic + lambda * mm + iou_conditioned;
}

ad::Var total_loss(const ad::Var& iou_agnostic, const ad::Var& mm, const ad::Var& iou_conditioned,
                   double lambda) {
  return ad::add(ad::add(iou_agnostic, ad::scale(mm, lambda)), iou_conditioned);
}

}  // namespace dualmap
