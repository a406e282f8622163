#include "dualmap/synthetic.hpp"

#include "dualmap/feature_io.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace dualmap {

std::vector<std::string> default_action_phrases() {
  return {
      "apply foundation on the face",      "blend concealer under the eyes",
      "brush blush on the cheeks",         "draw eyeliner on the upper lid",
      "apply mascara to the lashes",       "fill in the eyebrows",
      "apply eyeshadow on the lid",        "contour the cheekbones",
      "apply highlighter on the cheekbones", "apply lipstick on the lips",
      "line the lips with lip liner",      "set the face with powder",
  };
}

void SyntheticSpec::validate() const {
  if (video_count < 1) throw std::invalid_argument("synthetic: video_count must be >= 1");
  if (steps_per_video < 1) throw std::invalid_argument("synthetic: need at least one step per video");
  if (clip_jitter < 0 || clips_per_video - clip_jitter < 1)
    throw std::invalid_argument("synthetic: clip count range must stay >= 1");
  if (steps_per_video > clips_per_video - clip_jitter)
    throw std::invalid_argument("synthetic: more steps than clips");
  if (action_phrases.size() < static_cast<std::size_t>(steps_per_video))
    throw std::invalid_argument("synthetic: fewer action codes than steps per video");
  if (noise < 0.0 || code_scale < 0.0 || video_jitter < 0.0)
    throw std::invalid_argument("synthetic: scales must be >= 0");
  if (feature_dim < 1) throw std::invalid_argument("synthetic: feature_dim must be >= 1");
  if (!(clip_seconds > 0.0)) throw std::invalid_argument("synthetic: clip_seconds must be > 0");
  if (!(coverage > 0.0 && coverage <= 1.0))
    throw std::invalid_argument("synthetic: coverage must be in (0,1]");
  if (!layouts.empty() && layouts.size() != static_cast<std::size_t>(video_count))
    throw std::invalid_argument("synthetic: layouts must list one entry per video");
}

namespace {

void check_layout(const std::vector<StepSpan>& steps, int clips, std::size_t codes, int video) {
  const std::string where = "synthetic: video " + std::to_string(video);
  if (steps.empty()) throw std::invalid_argument(where + " has no steps");
  std::vector<StepSpan> sorted = steps;
  std::sort(sorted.begin(), sorted.end(),
            [](const StepSpan& x, const StepSpan& y) { return x.first_clip < y.first_clip; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& s = sorted[i];
    if (s.clip_count < 1 || s.first_clip < 0 || s.first_clip + s.clip_count > clips)
      throw std::invalid_argument(where + " has a step outside the video");
    if (s.code < 0 || static_cast<std::size_t>(s.code) >= codes)
      throw std::invalid_argument(where + " uses an unknown action code");
    if (i > 0 && sorted[i - 1].first_clip + sorted[i - 1].clip_count > s.first_clip)
      throw std::invalid_argument(where + " has overlapping steps");
  }
}

// Splits `total` into `parts` positive integers with random proportions.
std::vector<int> random_partition(int total, int parts, int minimum, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> weight(0.5, 1.5);
  std::vector<double> w(static_cast<std::size_t>(parts));
  for (auto& x : w) x = weight(rng);
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<int> out(static_cast<std::size_t>(parts), minimum);
  int remaining = total - minimum * parts;
  int assigned = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int extra = static_cast<int>(w[i] / sum * remaining);
    out[i] += extra;
    assigned += extra;
  }
  for (int i = 0; assigned < remaining; ++i, ++assigned) out[static_cast<std::size_t>(i % parts)] += 1;
  return out;
}

std::vector<StepSpan> random_layout(int clips, int steps, std::size_t codes, double coverage,
                                    std::mt19937_64& rng) {
  const int covered = std::max(steps, static_cast<int>(coverage * clips));
  const std::vector<int> lengths = random_partition(covered, steps, 1, rng);
  const std::vector<int> gaps = random_partition(clips - covered, steps + 1, 0, rng);
  std::vector<int> order(codes);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<StepSpan> layout;
  int cursor = 0;
  for (int s = 0; s < steps; ++s) {
    cursor += gaps[static_cast<std::size_t>(s)];
    layout.push_back({cursor, lengths[static_cast<std::size_t>(s)], order[static_cast<std::size_t>(s)]});
    cursor += lengths[static_cast<std::size_t>(s)];
  }
  return layout;
}

ad::Matrix gaussian_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  ad::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

Manifest generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed,
                                    const std::filesystem::path& out_dir) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const std::size_t codes = spec.action_phrases.size();
  const ad::Matrix background = gaussian_matrix(1, spec.feature_dim, rng);
  const ad::Matrix code_vectors = gaussian_matrix(static_cast<int>(codes), spec.feature_dim, rng);

  std::filesystem::create_directories(out_dir / "features");
  Manifest m;
  m.base_dir = out_dir;
  std::uniform_int_distribution<int> jitter(-spec.clip_jitter, spec.clip_jitter);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int v = 0; v < spec.video_count; ++v) {
    char id[32];
    std::snprintf(id, sizeof id, "vid%04d", v);
    const int clips = spec.clips_per_video + (spec.clip_jitter > 0 ? jitter(rng) : 0);
    std::vector<StepSpan> layout =
        spec.layouts.empty()
            ? random_layout(clips, spec.steps_per_video, codes, spec.coverage, rng)
            : spec.layouts[static_cast<std::size_t>(v)];
    check_layout(layout, clips, codes, v);

    ad::Matrix video_bg = background + spec.video_jitter * gaussian_matrix(1, spec.feature_dim, rng);
    ad::Matrix feats(clips, spec.feature_dim);
    for (int t = 0; t < clips; ++t) feats.row(t) = video_bg.row(0);
    for (const auto& s : layout)
      for (int t = s.first_clip; t < s.first_clip + s.clip_count; ++t)
        feats.row(t) += spec.code_scale * code_vectors.row(s.code);
    for (Eigen::Index i = 0; i < feats.size(); ++i) feats.data()[i] += spec.noise * gauss(rng);

    const std::string rel = std::string("features/") + id + ".feat";
    write_features(out_dir / rel, feats);
    const double duration = clips * spec.clip_seconds;
    m.videos.push_back({id, duration, rel, clips});
    for (std::size_t s = 0; s < layout.size(); ++s) {
      const auto& step = layout[s];
      m.queries.push_back({std::string(id) + "_s" + std::to_string(s), id,
                           spec.action_phrases[static_cast<std::size_t>(step.code)],
                           TimeInterval(step.first_clip * spec.clip_seconds,
                                        (step.first_clip + step.clip_count) * spec.clip_seconds)});
    }
  }
  save_manifest(m, out_dir / "manifest.json");
  return load_manifest(out_dir / "manifest.json");
}

}  // namespace dualmap
