#pragma once

#include "dualmap/data_model.hpp"
#include "dualmap/model.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace dualmap {

/// R@N,IoU@theta: the fraction of queries with at least one of their top-N
/// post-NMS predictions at IoU strictly above theta.
struct EvalReport {
  std::vector<int> ns;
  std::vector<double> thetas;
  std::vector<std::vector<double>> recall;  // [n index][theta index]
  std::vector<std::string> query_ids;
  std::vector<double> top1_iou;             // 0 when a query has no prediction

  /// Throws std::out_of_range for an (n, theta) pair not in the report.
  double at(int n, double theta) const;
  nlohmann::json to_json() const;
  std::string to_table() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline const std::vector<int> kDefaultRecallNs{1, 5};
inline const std::vector<double> kDefaultIouThresholds{0.3, 0.5, 0.7};

/// Recall from already ranked (post-NMS) predictions, one list per query.
EvalReport compute_recall(const std::vector<std::string>& query_ids,
                          const std::vector<std::vector<ScoredInterval>>& ranked,
                          const std::vector<TimeInterval>& ground_truth,
                          const std::vector<int>& ns = kDefaultRecallNs,
                          const std::vector<double>& thetas = kDefaultIouThresholds);

/// A query with externally supplied candidate scores.
struct ScriptedQuery {
  std::string query_id;
  TimeInterval ground_truth;
  std::vector<ScoredInterval> candidates;
};

/// Ranks each query's candidates with NMS, then computes recall.
EvalReport evaluate_scripted(const std::vector<ScriptedQuery>& queries, double nms_threshold,
                             const std::vector<int>& ns = kDefaultRecallNs,
                             const std::vector<double>& thetas = kDefaultIouThresholds);

/// Candidate intervals with joint scores for every valid cell.
std::vector<ScoredInterval> candidates_from_scores(const ScoreMaps& scores, const ClipGrid& grid);

/// Scores every manifest query with the model and evaluates recall.
EvalReport evaluate_recall(const GroundingModel& model, const Manifest& manifest,
                           double nms_threshold, const std::vector<int>& ns = kDefaultRecallNs,
                           const std::vector<double>& thetas = kDefaultIouThresholds);

/// Top-k post-NMS intervals. Throws std::invalid_argument when k < 1.
PredictionRecord predict(const GroundingModel& model, const ad::Matrix& raw_features,
                         double duration_s, const std::string& sentence, int k,
                         double nms_threshold, const std::string& query_id = "");

/// N x N grids of p_A, p_C and the joint p, with null on invalid cells.
nlohmann::json export_score_map(const GroundingModel& model, const ad::Matrix& raw_features,
                                const std::string& sentence, const std::string& query_id = "");

}  // namespace dualmap
