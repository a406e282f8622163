#include "dualmap/evaluation.hpp"

#include "dualmap/feature_io.hpp"
#include "dualmap/scoring.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dualmap {

using nlohmann::json;

double EvalReport::at(int n, double theta) const {
  for (std::size_t i = 0; i < ns.size(); ++i)
    for (std::size_t j = 0; j < thetas.size(); ++j)
      if (ns[i] == n && thetas[j] == theta) return recall[i][j];
  throw std::out_of_range("no R@" + std::to_string(n) + " entry for the requested IoU");
}

json EvalReport::to_json() const {
  json table = json::object();
  for (std::size_t i = 0; i < ns.size(); ++i)
    for (std::size_t j = 0; j < thetas.size(); ++j) {
      char key[48];
      std::snprintf(key, sizeof key, "R@%d,IoU@%.2g", ns[i], thetas[j]);
      table[key] = recall[i][j];
    }
  json per_query = json::array();
  for (std::size_t q = 0; q < query_ids.size(); ++q)
    per_query.push_back({{"query_id", query_ids[q]}, {"top1_iou", top1_iou[q]}});
  return {{"queries", query_ids.size()}, {"recall", table}, {"per_query", per_query}};
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  char buf[64];
  os << "         ";
  for (double t : thetas) {
    std::snprintf(buf, sizeof buf, "  IoU@%-4.2g", t);
    os << buf;
  }
  os << '\n';
  for (std::size_t i = 0; i < ns.size(); ++i) {
    std::snprintf(buf, sizeof buf, "R@%-7d", ns[i]);
    os << buf;
    for (std::size_t j = 0; j < thetas.size(); ++j) {
      std::snprintf(buf, sizeof buf, "  %8.4f", recall[i][j]);
      os << buf;
    }
    os << '\n';
  }
  os << "queries: " << query_ids.size() << '\n';
  return os.str();
}

EvalReport compute_recall(const std::vector<std::string>& query_ids,
                          const std::vector<std::vector<ScoredInterval>>& ranked,
                          const std::vector<TimeInterval>& ground_truth,
                          const std::vector<int>& ns, const std::vector<double>& thetas) {
  if (ranked.size() != query_ids.size() || ground_truth.size() != query_ids.size())
    throw std::invalid_argument("compute_recall: length mismatch");
  for (int n : ns)
    if (n < 1) throw std::invalid_argument("compute_recall: N must be >= 1");
  EvalReport r;
  r.ns = ns;
  r.thetas = thetas;
  r.query_ids = query_ids;
  r.recall.assign(ns.size(), std::vector<double>(thetas.size(), 0.0));
  for (std::size_t q = 0; q < query_ids.size(); ++q) {
    std::vector<double> ious;
    for (const auto& p : ranked[q]) ious.push_back(temporal_iou(p.interval, ground_truth[q]));
    r.top1_iou.push_back(ious.empty() ? 0.0 : ious.front());
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const std::size_t top = std::min(ious.size(), static_cast<std::size_t>(ns[i]));
      const double best = top == 0 ? 0.0 : *std::max_element(ious.begin(), ious.begin() + top);
      for (std::size_t j = 0; j < thetas.size(); ++j)
        if (top > 0 && best > thetas[j]) r.recall[i][j] += 1.0;
    }
  }
  if (!query_ids.empty())
    for (auto& row : r.recall)
      for (auto& v : row) v /= static_cast<double>(query_ids.size());
  return r;
}

namespace {

std::size_t max_n(const std::vector<int>& ns) {
  return ns.empty() ? 1 : static_cast<std::size_t>(*std::max_element(ns.begin(), ns.end()));
}

}  // namespace

EvalReport evaluate_scripted(const std::vector<ScriptedQuery>& queries, double nms_threshold,
                             const std::vector<int>& ns, const std::vector<double>& thetas) {
  std::vector<std::string> ids;
  std::vector<std::vector<ScoredInterval>> ranked;
  std::vector<TimeInterval> gts;
  for (const auto& q : queries) {
    ids.push_back(q.query_id);
    gts.push_back(q.ground_truth);
    ranked.push_back(nms_select(q.candidates, nms_threshold, max_n(ns)));
  }
  return compute_recall(ids, ranked, gts, ns, thetas);
}

std::vector<ScoredInterval> candidates_from_scores(const ScoreMaps& scores, const ClipGrid& grid) {
  const auto& cells = scores.mask.cells();
  if (scores.p.size() != cells.size())
    throw std::invalid_argument("candidates_from_scores: score/mask length mismatch");
  std::vector<ScoredInterval> out;
  out.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i)
    out.push_back({interval_from_cell(cells[i], grid), scores.p[i]});
  return out;
}

EvalReport evaluate_recall(const GroundingModel& model, const Manifest& manifest,
                           double nms_threshold, const std::vector<int>& ns,
                           const std::vector<double>& thetas) {
  std::map<std::string, std::vector<std::size_t>> by_video;
  for (std::size_t q = 0; q < manifest.queries.size(); ++q)
    by_video[manifest.queries[q].video_id].push_back(q);

  const std::size_t count = manifest.queries.size();
  std::vector<std::string> ids(count);
  std::vector<std::vector<ScoredInterval>> ranked(count);
  std::vector<TimeInterval> gts(count);
  const int n = model.config().encoder.sampled_clips;
  for (const auto& video : manifest.videos) {
    auto it = by_video.find(video.video_id);
    if (it == by_video.end()) continue;
    const ad::Matrix raw = read_features(manifest.feature_file(video));
    const ClipGrid grid(static_cast<int>(raw.rows()), n, video.duration_s);
    ad::NoGradGuard no_grad;
    const GroundingModel::VideoPass pass = model.forward_video(raw);
    for (std::size_t q : it->second) {
      const QueryEntry& entry = manifest.queries[q];
      ids[q] = entry.query_id;
      gts[q] = entry.gt_interval;
      ranked[q] = nms_select(candidates_from_scores(model.score(pass, entry.sentence), grid),
                             nms_threshold, max_n(ns));
    }
  }
  return compute_recall(ids, ranked, gts, ns, thetas);
}

PredictionRecord predict(const GroundingModel& model, const ad::Matrix& raw_features,
                         double duration_s, const std::string& sentence, int k,
                         double nms_threshold, const std::string& query_id) {
  if (k < 1) throw std::invalid_argument("predict: k must be >= 1");
  const ClipGrid grid(static_cast<int>(raw_features.rows()), model.config().encoder.sampled_clips,
                      duration_s);
  PredictionRecord r;
  r.query_id = query_id;
  r.ranked = nms_select(candidates_from_scores(model.score(raw_features, sentence), grid),
                        nms_threshold, static_cast<std::size_t>(k));
  return r;
}

json export_score_map(const GroundingModel& model, const ad::Matrix& raw_features,
                      const std::string& sentence, const std::string& query_id) {
  const ScoreMaps s = model.score(raw_features, sentence);
  const int n = s.mask.side();
  auto grid_of = [&](const std::vector<double>& values) {
    json rows = json::array();
    for (int a = 0; a < n; ++a) {
      json row = json::array();
      for (int b = 0; b < n; ++b) {
        const int pos = s.mask.position({a, b});
        row.push_back(pos < 0 ? json(nullptr) : json(values[static_cast<std::size_t>(pos)]));
      }
      rows.push_back(std::move(row));
    }
    return rows;
  };
  json mask = json::array();
  for (int a = 0; a < n; ++a) {
    json row = json::array();
    for (int b = 0; b < n; ++b) row.push_back(s.mask.valid(a, b));
    mask.push_back(std::move(row));
  }
  return {{"query_id", query_id}, {"sentence", sentence}, {"N", n},
          {"mask", mask},         {"p_a", grid_of(s.p_a)}, {"p_c", grid_of(s.p_c)},
          {"p", grid_of(s.p)}};
}

}  // namespace dualmap
