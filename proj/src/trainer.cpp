#include "dualmap/trainer.hpp"

#include "dualmap/feature_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dualmap {

std::string normalize_sentence(const std::string& sentence) {
  std::string out;
  for (const auto& w : tokenize(sentence)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

TrainingData::TrainingData(const Manifest& manifest, const ValidityMask& mask,
                           const LossConfig& loss)
    : manifest_(manifest) {
  std::map<std::string, std::size_t> video_index;
  for (std::size_t v = 0; v < manifest_.videos.size(); ++v) {
    video_index[manifest_.videos[v].video_id] = v;
    features_.push_back(read_features(manifest_.feature_file(manifest_.videos[v])));
  }
  sentences_.resize(manifest_.videos.size());
  const int n = mask.side();
  const auto m = static_cast<std::size_t>(mask.count());
  for (std::size_t q = 0; q < manifest_.queries.size(); ++q) {
    const QueryEntry& entry = manifest_.queries[q];
    QueryTargets t;
    t.query = q;
    t.video = video_index.at(entry.video_id);
    t.text = normalize_sentence(entry.sentence);
    sentences_[t.video].push_back(t.text);

    const VideoEntry& video = manifest_.videos[t.video];
    const ClipGrid grid(video.raw_clip_count, n, video.duration_s);
    t.overlap.resize(m);
    t.scaled.resize(static_cast<Eigen::Index>(m), 1);
    for (std::size_t i = 0; i < m; ++i) {
      const TimeInterval cand = interval_from_cell(mask.cells()[i], grid);
      t.overlap[i] = cand.length() > 0.0 || entry.gt_interval.length() > 0.0
                         ? temporal_iou(cand, entry.gt_interval)
                         : 0.0;
      t.scaled(static_cast<Eigen::Index>(i), 0) = scale_iou(t.overlap[i], loss.t_min, loss.t_max);
    }
    t.positive = static_cast<ad::Index>(
        std::max_element(t.overlap.begin(), t.overlap.end()) - t.overlap.begin());

    std::vector<ad::Index> low;
    for (std::size_t i = 0; i < m; ++i)
      if (t.overlap[i] < loss.neg_iou_bound) low.push_back(static_cast<ad::Index>(i));
    std::stable_sort(low.begin(), low.end(), [&](ad::Index x, ad::Index y) {
      return t.overlap[static_cast<std::size_t>(x)] < t.overlap[static_cast<std::size_t>(y)];
    });
    if (low.size() > static_cast<std::size_t>(loss.intra_negative_cap))
      low.resize(static_cast<std::size_t>(loss.intra_negative_cap));
    t.intra_cells = std::move(low);
    targets_.push_back(std::move(t));
  }
}

namespace {

ad::Var batch_mean(const std::vector<ad::Var>& terms) {
  return ad::scale(ad::sum(ad::concat_rows(terms)), 1.0 / static_cast<double>(terms.size()));
}

void check_finite(double value, const char* term, int step) {
  if (!std::isfinite(value))
    throw TrainingError("non-finite loss term '" + std::string(term) + "' at step " +
                        std::to_string(step));
}

}  // namespace

BatchLoss batch_loss(const GroundingModel& model, const TrainingData& data,
                     std::span<const std::size_t> batch, const LossConfig& loss,
                     const DropoutSource* dropout) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  const PathMode path = model.config().path;
  const bool agnostic = path != PathMode::kConditionedOnly;
  const bool conditioned = path != PathMode::kAgnosticOnly;
  const bool matching = agnostic && loss.lambda > 0.0;

  std::map<std::size_t, GroundingModel::VideoPass> videos;
  std::map<std::string, ad::Var> queries;
  auto query_of = [&](const std::string& text) -> const ad::Var& {
    auto it = queries.find(text);
    if (it == queries.end()) it = queries.emplace(text, model.forward_query(text, dropout)).first;
    return it->second;
  };

  std::vector<ad::Var> iou_terms, cond_terms;
  std::vector<MatchingItem> items;
  for (std::size_t q : batch) {
    const QueryTargets& t = data.targets(q);
    auto vit = videos.find(t.video);
    if (vit == videos.end())
      vit = videos.emplace(t.video, model.forward_video(data.features(t.video), dropout)).first;
    const GroundingModel::PairPass pair = model.forward_pair(vit->second, query_of(t.text));

    if (agnostic)
      iou_terms.push_back(
          ad::bce_with_logits(ad::scale(pair.agnostic.s_iou, kScoreAmplification), t.scaled));
    if (conditioned)
      cond_terms.push_back(ad::bce_with_logits(ad::scale(pair.s_c, kScoreAmplification), t.scaled));
    if (matching) {
      MatchingItem item;
      const ad::Index pos[] = {t.positive};
      item.moment = ad::gather_rows(pair.agnostic.moment_mm, pos);
      item.sentence = pair.agnostic.sentence_mm;
      if (!t.intra_cells.empty())
        item.intra_moments = ad::gather_rows(pair.agnostic.moment_mm, t.intra_cells);
      std::vector<ad::Var> others;
      std::vector<std::string> seen{t.text};
      for (std::size_t other : batch)
        if (data.targets(other).video == t.video) seen.push_back(data.targets(other).text);
      for (const auto& s : data.video_sentences(t.video)) {
        if (std::find(seen.begin(), seen.end(), s) != seen.end()) continue;
        seen.push_back(s);
        others.push_back(model.sentence_mm(query_of(s)));
      }
      if (!others.empty()) item.intra_sentences = ad::concat_rows(others);
      item.video_id = data.manifest().videos[t.video].video_id;
      item.sentence_text = t.text;
      item.moment_key = std::to_string(t.positive);
      items.push_back(std::move(item));
    }
  }

  BatchLoss out;
  std::vector<ad::Var> parts;
  if (agnostic) {
    ad::Var l = batch_mean(iou_terms);
    out.record.iou = l.scalar();
    parts.push_back(l);
  }
  if (matching) {
    ad::Var l = mutual_matching_loss(items, loss);
    out.record.matching = l.scalar();
    parts.push_back(ad::scale(l, loss.lambda));
  }
  if (conditioned) {
    ad::Var l = batch_mean(cond_terms);
    out.record.conditioned = l.scalar();
    parts.push_back(l);
  }
  out.total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out.total = ad::add(out.total, parts[i]);
  out.record.total = out.total.scalar();
  return out;
}

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(ParameterStore& store) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (auto& p : store.all()) {
    if (!p.var.has_grad()) continue;
    const ad::Matrix& g = p.var.grad();
    auto [it, fresh] = moments_.try_emplace(p.name);
    auto& [m, v] = it->second;
    if (fresh) {
      m = ad::Matrix::Zero(g.rows(), g.cols());
      v = ad::Matrix::Zero(g.rows(), g.cols());
    }
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    ad::Matrix& w = p.var.mutable_value();
    w.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

TokenEmbedder make_embedder(const TrainConfig& cfg, const Manifest& manifest) {
  if (cfg.model.encoder.backend == EmbeddingBackend::kPretrainedFiles)
    return TokenEmbedder::from_table(cfg.token_table);
  std::vector<std::string> sentences;
  for (const auto& q : manifest.queries) sentences.push_back(q.sentence);
  return TokenEmbedder::synthetic(build_vocabulary(sentences));
}

Trainer::Trainer(TrainConfig cfg, const Manifest& manifest)
    : cfg_((cfg.validate(), std::move(cfg))),
      model_(cfg_.model, make_embedder(cfg_, manifest), cfg_.seed),
      data_(manifest, model_.mask(), cfg_.loss),
      adam_(cfg_.learning_rate, cfg_.beta1, cfg_.beta2, cfg_.adam_eps),
      rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ULL) {
  if (data_.query_count() == 0) throw TrainingError("manifest has no queries");
  order_.resize(data_.query_count());
  reshuffle();
}

void Trainer::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

int Trainer::steps_per_epoch() const {
  const auto b = static_cast<std::size_t>(cfg_.batch_size);
  return static_cast<int>((data_.query_count() + b - 1) / b);
}

int Trainer::total_steps() const {
  return cfg_.max_steps > 0 ? cfg_.max_steps : cfg_.epochs * steps_per_epoch();
}

LossRecord Trainer::step() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(cfg_.batch_size));
  const std::span<const std::size_t> batch(order_.data() + cursor_, end - cursor_);
  cursor_ = end;

  const int step_index = static_cast<int>(trace_.size());
  const DropoutSource dropout{cfg_.model.encoder.dropout, &rng_};
  model_.parameters().zero_grad();
  BatchLoss loss = batch_loss(model_, data_, batch, cfg_.loss,
                              cfg_.model.encoder.dropout > 0.0 ? &dropout : nullptr);
  check_finite(loss.record.iou, "iou", step_index);
  check_finite(loss.record.matching, "matching", step_index);
  check_finite(loss.record.conditioned, "conditioned", step_index);
  check_finite(loss.record.total, "total", step_index);
  ad::backward(loss.total);
  adam_.step(model_.parameters());

  loss.record.step = step_index;
  loss.record.epoch = epoch_;
  trace_.push_back(loss.record);
  return loss.record;
}

void Trainer::run(const StepCallback& on_step, std::chrono::duration<double> budget) {
  const auto start = std::chrono::steady_clock::now();
  const int target = total_steps();
  while (static_cast<int>(trace_.size()) < target) {
    const LossRecord r = step();
    if (on_step && !on_step(r)) break;
    if (budget.count() > 0.0 && std::chrono::steady_clock::now() - start >= budget) break;
  }
}

}  // namespace dualmap
