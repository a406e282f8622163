#include "dualmap/data_model.hpp"

#include "dualmap/feature_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dualmap {

using nlohmann::json;

TimeInterval::TimeInterval(double start, double end) : start_(start), end_(end) {
  if (!std::isfinite(start) || !std::isfinite(end))
    throw std::invalid_argument("TimeInterval: non-finite bound");
  if (start < 0.0) throw std::invalid_argument("TimeInterval: negative start");
  if (start > end) throw std::invalid_argument("TimeInterval: start after end");
}

ClipGrid::ClipGrid(int raw_clip_count, int sampled_clip_count, double video_duration)
    : raw_clip_count_(raw_clip_count),
      sampled_clip_count_(sampled_clip_count),
      video_duration_(video_duration) {
  if (raw_clip_count < 1) throw std::invalid_argument("ClipGrid: raw clip count must be >= 1");
  if (sampled_clip_count < 1)
    throw std::invalid_argument("ClipGrid: sampled clip count must be >= 1");
  if (!(video_duration > 0.0) || !std::isfinite(video_duration))
    throw std::invalid_argument("ClipGrid: video duration must be positive");
}

double temporal_iou(const TimeInterval& x, const TimeInterval& y) {
  const double inter = std::max(0.0, std::min(x.end(), y.end()) - std::max(x.start(), y.start()));
  const double uni = std::max(x.end(), y.end()) - std::min(x.start(), y.start());
  // Disjoint intervals have a union hull longer than the true union; only the
  // overlapping case uses the hull directly.
  const double union_len = inter > 0.0 ? uni : x.length() + y.length();
  if (!(union_len > 0.0)) throw std::domain_error("temporal_iou: union has zero length");
  return inter / union_len;
}

TimeInterval interval_from_cell(CandidateCell cell, const ClipGrid& grid) {
  const int n = grid.sampled_clip_count();
  if (cell.a < 0 || cell.b < cell.a || cell.b >= n)
    throw std::out_of_range("interval_from_cell: cell (" + std::to_string(cell.a) + "," +
                            std::to_string(cell.b) + ") outside an N=" + std::to_string(n) +
                            " grid");
  const double delta = grid.clip_duration();
  const double start = cell.a * delta;
  const double end = cell.b + 1 == n ? grid.video_duration()
                                     : std::min((cell.b + 1) * delta, grid.video_duration());
  return TimeInterval(start, end);
}

CandidateCell cell_from_interval(const TimeInterval& iv, const ClipGrid& grid) {
  const int n = grid.sampled_clip_count();
  CandidateCell best{0, 0};
  double best_iou = -1.0;
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      const double iou = temporal_iou(interval_from_cell({a, b}, grid), iv);
      if (iou > best_iou) {
        best_iou = iou;
        best = {a, b};
      }
    }
  return best;
}

const VideoEntry& Manifest::video(const std::string& id) const {
  auto it = std::find_if(videos.begin(), videos.end(),
                         [&](const VideoEntry& v) { return v.video_id == id; });
  if (it == videos.end()) throw ManifestError("unknown video_id '" + id + "'");
  return *it;
}

std::filesystem::path Manifest::feature_file(const VideoEntry& v) const {
  std::filesystem::path p(v.feature_path);
  return p.is_absolute() ? p : base_dir / p;
}

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw ManifestError(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ManifestError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ManifestError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("videos") || !doc["videos"].is_array() ||
      !doc.contains("queries") || !doc["queries"].is_array())
    throw ManifestError("manifest must be an object with 'videos' and 'queries' arrays");

  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> video_ids;
  for (std::size_t i = 0; i < doc["videos"].size(); ++i) {
    const json& jv = doc["videos"][i];
    const std::string where = "videos[" + std::to_string(i) + "]";
    VideoEntry v;
    v.video_id = field<std::string>(jv, "video_id", where);
    const std::string named = "video '" + v.video_id + "'";
    v.duration_s = field<double>(jv, "duration_s", named);
    v.feature_path = field<std::string>(jv, "feature_path", named);
    v.raw_clip_count = field<int>(jv, "raw_clip_count", named);
    if (!video_ids.insert(v.video_id).second) throw ManifestError(named + ": duplicate video_id");
    if (!(v.duration_s > 0.0) || !std::isfinite(v.duration_s))
      throw ManifestError(named + ": duration_s must be positive");
    if (v.raw_clip_count < 1) throw ManifestError(named + ": raw_clip_count must be >= 1");
    FeatureHeader header;
    try {
      header = read_feature_header(m.feature_file(v));
    } catch (const FeatureFileError& e) {
      throw ManifestError(named + ": unreadable feature file: " + e.what());
    }
    if (static_cast<int>(header.clip_count) != v.raw_clip_count)
      throw ManifestError(named + ": feature file has " + std::to_string(header.clip_count) +
                          " clips but raw_clip_count is " + std::to_string(v.raw_clip_count));
    m.videos.push_back(std::move(v));
  }

  std::set<std::string> query_ids;
  for (std::size_t i = 0; i < doc["queries"].size(); ++i) {
    const json& jq = doc["queries"][i];
    const std::string where = "queries[" + std::to_string(i) + "]";
    QueryEntry q;
    q.query_id = field<std::string>(jq, "query_id", where);
    const std::string named = "query '" + q.query_id + "'";
    q.video_id = field<std::string>(jq, "video_id", named);
    q.sentence = field<std::string>(jq, "sentence", named);
    if (!query_ids.insert(q.query_id).second) throw ManifestError(named + ": duplicate query_id");
    if (!video_ids.count(q.video_id))
      throw ManifestError(named + ": references unknown video_id '" + q.video_id + "'");
    auto gt = field<std::vector<double>>(jq, "gt_interval", named);
    if (gt.size() != 2) throw ManifestError(named + ": gt_interval must be [start, end]");
    try {
      q.gt_interval = TimeInterval(gt[0], gt[1]);
    } catch (const std::invalid_argument& e) {
      throw ManifestError(named + ": malformed gt_interval: " + e.what());
    }
    const double duration = m.video(q.video_id).duration_s;
    if (q.gt_interval.end() > duration)
      throw ManifestError(named + ": gt_interval end " + std::to_string(q.gt_interval.end()) +
                          " exceeds video duration " + std::to_string(duration));
    m.queries.push_back(std::move(q));
  }
  return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  json doc;
  doc["videos"] = json::array();
  for (const auto& v : manifest.videos)
    doc["videos"].push_back({{"video_id", v.video_id},
                             {"duration_s", v.duration_s},
                             {"feature_path", v.feature_path},
                             {"raw_clip_count", v.raw_clip_count}});
  doc["queries"] = json::array();
  for (const auto& q : manifest.queries)
    doc["queries"].push_back({{"query_id", q.query_id},
                              {"video_id", q.video_id},
                              {"sentence", q.sentence},
                              {"gt_interval", {q.gt_interval.start(), q.gt_interval.end()}}});
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
}

std::string to_json_line(const PredictionRecord& record) {
  json j;
  j["query_id"] = record.query_id;
  j["predictions"] = json::array();
  for (const auto& r : record.ranked)
    j["predictions"].push_back({r.interval.start(), r.interval.end(), r.score});
  return j.dump();
}

}  // namespace dualmap
