#pragma once

#include "dualmap/config.hpp"
#include "dualmap/data_model.hpp"
#include "dualmap/model.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualmap {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-query supervision derived from the ground truth on the model's grid.
struct QueryTargets {
  std::size_t query = 0;              // index into Manifest::queries
  std::size_t video = 0;              // index into Manifest::videos
  std::vector<double> overlap;        // raw IoU per valid cell
  ad::Matrix scaled;                  // M x 1 scaled-IoU targets
  ad::Index positive = 0;             // valid-cell position with the highest IoU
  std::vector<ad::Index> intra_cells; // low-IoU cells, lowest IoU first, capped
  std::string text;                   // normalized sentence
};

/// Manifest plus cached features and targets for one mask and loss config.
class TrainingData {
 public:
  TrainingData(const Manifest& manifest, const ValidityMask& mask, const LossConfig& loss);

  const Manifest& manifest() const { return manifest_; }
  const ad::Matrix& features(std::size_t video) const { return features_[video]; }
  const QueryTargets& targets(std::size_t query) const { return targets_[query]; }
  std::size_t query_count() const { return targets_.size(); }
  /// Normalized sentences annotated on the video, in manifest order.
  const std::vector<std::string>& video_sentences(std::size_t video) const {
    return sentences_[video];
  }

 private:
  Manifest manifest_;
  std::vector<ad::Matrix> features_;
  std::vector<QueryTargets> targets_;
  std::vector<std::vector<std::string>> sentences_;
};

std::string normalize_sentence(const std::string& sentence);

struct LossRecord {
  int step = 0;
  int epoch = 0;
  double total = 0.0;
  double iou = 0.0;          // agnostic BCE term
  double matching = 0.0;     // unweighted matching term
  double conditioned = 0.0;  // conditioned BCE term
  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct BatchLoss {
  ad::Var total;
  LossRecord record;
};

/// Builds the training objective for a batch of query indices. Terms that
/// the path mode disables are reported as 0 and left out of the graph.
BatchLoss batch_loss(const GroundingModel& model, const TrainingData& data,
                     std::span<const std::size_t> batch, const LossConfig& loss,
                     const DropoutSource* dropout = nullptr);

/// Adam with bias correction over every registered parameter.
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1, double beta2, double eps);
  void step(ParameterStore& store);
  int steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::map<std::string, std::pair<ad::Matrix, ad::Matrix>> moments_;
};

/// Shuffled mini-batch training. Fully determined by the config seed.
class Trainer {
 public:
  Trainer(TrainConfig cfg, const Manifest& manifest);

  GroundingModel& model() { return model_; }
  const GroundingModel& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const TrainingData& data() const { return data_; }
  const std::vector<LossRecord>& trace() const { return trace_; }

  /// One optimizer step; returns its loss record. Throws TrainingError on a
  /// non-finite term.
  LossRecord step();

  using StepCallback = std::function<bool(const LossRecord&)>;  // false stops
  /// Runs until epochs (or max_steps when set) are exhausted, the callback
  /// returns false, or the time budget elapses (0 = unlimited).
  void run(const StepCallback& on_step = {}, std::chrono::duration<double> budget = {});

  int total_steps() const;
  int steps_per_epoch() const;

 private:
  void reshuffle();

  TrainConfig cfg_;
  GroundingModel model_;
  TrainingData data_;
  AdamOptimizer adam_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int epoch_ = 0;
  std::vector<LossRecord> trace_;
};

/// Builds the embedder for a config: the text table for the pretrained-files
/// backend, otherwise synthetic vectors over the manifest vocabulary.
TokenEmbedder make_embedder(const TrainConfig& cfg, const Manifest& manifest);

}  // namespace dualmap
