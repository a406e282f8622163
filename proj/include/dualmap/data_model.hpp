#pragma once

// Temporal types shared by every module: real-time intervals, the clip grid
// that discretizes a video, 2D-map cell coordinates, dataset manifests and
// ranked predictions.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dualmap {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A closed segment [start, end] in seconds.
class TimeInterval {
 public:
  TimeInterval() = default;
  /// Throws std::invalid_argument unless both ends are finite, start >= 0 and start <= end.
  TimeInterval(double start, double end);

  double start() const { return start_; }
  double end() const { return end_; }
  double length() const { return end_ - start_; }

  friend bool operator==(const TimeInterval&, const TimeInterval&) = default;

 private:
  double start_ = 0.0;
  double end_ = 0.0;
};

/// Discretization of a video into N equal sampled clips.
class ClipGrid {
 public:
  ClipGrid(int raw_clip_count, int sampled_clip_count, double video_duration);

  int raw_clip_count() const { return raw_clip_count_; }
  int sampled_clip_count() const { return sampled_clip_count_; }
  double video_duration() const { return video_duration_; }
  double clip_duration() const { return video_duration_ / sampled_clip_count_; }

 private:
  int raw_clip_count_;
  int sampled_clip_count_;
  double video_duration_;
};

/// Map coordinate (start clip a, inclusive end clip b).
struct CandidateCell {
  int a = 0;
  int b = 0;
  friend bool operator==(const CandidateCell&, const CandidateCell&) = default;
};

/// |x ∩ y| / |x ∪ y|. Throws std::domain_error when the union has zero length.
double temporal_iou(const TimeInterval& x, const TimeInterval& y);

/// [a·Δ, (b+1)·Δ] with the end clipped to the video duration.
/// Throws std::out_of_range for cells outside the grid.
TimeInterval interval_from_cell(CandidateCell cell, const ClipGrid& grid);

/// IoU-argmax cell over all a <= b; ties go to the smaller a, then smaller b.
CandidateCell cell_from_interval(const TimeInterval& iv, const ClipGrid& grid);

struct VideoEntry {
  std::string video_id;
  double duration_s = 0.0;
  std::string feature_path;  // as written in the manifest (may be relative)
  int raw_clip_count = 0;
};

struct QueryEntry {
  std::string query_id;
  std::string video_id;
  std::string sentence;
  TimeInterval gt_interval;
};

struct Manifest {
  std::vector<VideoEntry> videos;
  std::vector<QueryEntry> queries;
  std::filesystem::path base_dir;  // relative feature paths resolve against this

  const VideoEntry& video(const std::string& id) const;
  std::filesystem::path feature_file(const VideoEntry& v) const;
};

/// Parses and validates a manifest. Every failure raises ManifestError naming
/// the offending record. Feature files are opened and their headers checked.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct ScoredInterval {
  TimeInterval interval;
  double score = 0.0;
};

struct PredictionRecord {
  std::string query_id;
  std::vector<ScoredInterval> ranked;  // scores non-increasing
};

/// One JSON line: {"query_id": ..., "predictions": [[start, end, score], ...]}
std::string to_json_line(const PredictionRecord& record);

}  // namespace dualmap
