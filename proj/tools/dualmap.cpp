// dualmap: synthesize datasets, train, evaluate, predict and export score maps.

#include "dualmap/checkpoint.hpp"
#include "dualmap/config.hpp"
#include "dualmap/evaluation.hpp"
#include "dualmap/feature_io.hpp"
#include "dualmap/synthetic.hpp"
#include "dualmap/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

using namespace dualmap;
using nlohmann::json;

namespace {

struct ConfigFlags {
  std::string preset = "desk";
  std::string config_file;
  std::map<std::string, std::string> values;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--preset", flags.preset, "Base preset: desk, large or small")
      ->check(CLI::IsMember(preset_names()));
  cmd->add_option("--config", flags.config_file, "JSON config file (flat keys)");
  const json defaults = to_json(TrainConfig{});
  for (const auto& [key, value] : defaults.items())
    cmd->add_option("--" + key, flags.values[key], "default " + value.dump())->group("Config");
}

json parse_flag(const std::string& key, const std::string& text, const json& like) {
  try {
    if (like.is_string()) return text;
    if (like.is_number_unsigned()) return std::stoull(text);
    if (like.is_number_integer()) return std::stoll(text);
    if (like.is_number_float()) return std::stod(text);
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError("--" + key, "cannot parse '" + text + "'");
}

TrainConfig resolve_config(const ConfigFlags& flags) {
  TrainConfig cfg = preset(flags.preset);
  if (!flags.config_file.empty()) {
    std::ifstream in(flags.config_file);
    if (!in) throw std::runtime_error("cannot open config file " + flags.config_file);
    cfg = apply_json(cfg, json::parse(in));
  }
  const json defaults = to_json(cfg);
  json overrides = json::object();
  for (const auto& [key, text] : flags.values)
    if (!text.empty()) overrides[key] = parse_flag(key, text, defaults.at(key));
  cfg = apply_json(cfg, overrides);
  cfg.validate();
  return cfg;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-path temporal map grounding: synth, train, eval, predict, dump-map"};
  app.require_subcommand(1);

  // synth
  SyntheticSpec spec;
  std::string synth_out;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--videos", spec.video_count, "Number of videos");
  synth->add_option("--clips", spec.clips_per_video, "Raw clips per video");
  synth->add_option("--clip-jitter", spec.clip_jitter, "Clip count jitter");
  synth->add_option("--steps", spec.steps_per_video, "Steps per video");
  synth->add_option("--noise", spec.noise, "Gaussian noise scale");
  synth->add_option("--code-scale", spec.code_scale, "Action-code offset scale");
  synth->add_option("--video-jitter", spec.video_jitter, "Per-video background jitter");
  synth->add_option("--feature-dim", spec.feature_dim, "Feature dimension d_v");
  synth->add_option("--clip-seconds", spec.clip_seconds, "Seconds per raw clip");
  synth->add_option("--coverage", spec.coverage, "Fraction of clips inside steps");

  // train
  ConfigFlags train_flags;
  std::string train_manifest, train_out;
  double budget_s = 0.0;
  int log_every = 10;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--manifest", train_manifest, "Dataset manifest")->required();
  train->add_option("--out", train_out, "Checkpoint directory")->required();
  train->add_option("--time-budget", budget_s, "Stop after this many seconds (0 = none)");
  train->add_option("--log-every", log_every, "Print the loss every k steps (0 = never)");
  add_config_flags(train, train_flags);

  // eval
  std::string eval_ckpt, eval_manifest, eval_json;
  auto* eval = app.add_subcommand("eval", "Evaluate R@N,IoU@theta");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();
  eval->add_option("--manifest", eval_manifest, "Dataset manifest")->required();
  eval->add_option("--json", eval_json, "Write the JSON report here ('-' = stdout)");

  // predict
  std::string pred_ckpt, pred_manifest, pred_query, pred_features, pred_sentence, pred_out;
  double pred_duration = 0.0;
  int pred_k = 5;
  auto* pred = app.add_subcommand("predict", "Emit top-k intervals as JSON lines");
  pred->add_option("--checkpoint", pred_ckpt, "Checkpoint directory")->required();
  pred->add_option("--manifest", pred_manifest, "Manifest; predicts every query unless --query");
  pred->add_option("--query", pred_query, "Single query id from the manifest");
  pred->add_option("--features", pred_features, "Feature file for an ad-hoc query");
  pred->add_option("--duration", pred_duration, "Video duration in seconds (ad-hoc query)");
  pred->add_option("--sentence", pred_sentence, "Query sentence (ad-hoc query)");
  pred->add_option("--k", pred_k, "Number of intervals");
  pred->add_option("--out", pred_out, "Output file ('-' = stdout)");

  // dump-map
  std::string dump_ckpt, dump_manifest, dump_query, dump_out;
  auto* dump = app.add_subcommand("dump-map", "Export N x N score grids for one query");
  dump->add_option("--checkpoint", dump_ckpt, "Checkpoint directory")->required();
  dump->add_option("--manifest", dump_manifest, "Dataset manifest")->required();
  dump->add_option("--query", dump_query, "Query id")->required();
  dump->add_option("--out", dump_out, "Output file ('-' = stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const Manifest m = generate_synthetic_dataset(spec, synth_seed, synth_out);
      std::cout << "wrote " << m.videos.size() << " videos, " << m.queries.size()
                << " queries to " << synth_out << '\n';
    } else if (*train) {
      const TrainConfig cfg = resolve_config(train_flags);
      const Manifest manifest = load_manifest(train_manifest);
      Trainer trainer(cfg, manifest);
      std::cerr << "training " << trainer.model().parameters().scalar_count() << " parameters, "
                << trainer.total_steps() << " steps\n";
      trainer.run(
          [&](const LossRecord& r) {
            if (log_every > 0 && r.step % log_every == 0)
              std::cerr << "step " << r.step << " epoch " << r.epoch << " loss " << r.total
                        << " (iou " << r.iou << ", mm " << r.matching << ", cond "
                        << r.conditioned << ")\n";
            return true;
          },
          std::chrono::duration<double>(budget_s));
      save_checkpoint(train_out, cfg, trainer.model(), trainer.trace());
      std::cout << "saved checkpoint to " << train_out << " after " << trainer.trace().size()
                << " steps\n";
    } else if (*eval) {
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      const Manifest manifest = load_manifest(eval_manifest);
      const EvalReport report =
          evaluate_recall(ckpt.model, manifest, ckpt.config.nms_threshold);
      std::cout << report.to_table();
      if (!eval_json.empty()) write_or_print(eval_json, report.to_json().dump(2) + "\n");
    } else if (*pred) {
      const Checkpoint ckpt = load_checkpoint(pred_ckpt);
      const double nms = ckpt.config.nms_threshold;
      std::string lines;
      if (!pred_features.empty()) {
        if (pred_sentence.empty() || !(pred_duration > 0.0))
          throw std::invalid_argument("--features needs --sentence and a positive --duration");
        lines = to_json_line(predict(ckpt.model, read_features(pred_features), pred_duration,
                                     pred_sentence, pred_k, nms, pred_query)) +
                "\n";
      } else {
        if (pred_manifest.empty()) throw std::invalid_argument("predict needs --manifest or --features");
        const Manifest manifest = load_manifest(pred_manifest);
        bool found = false;
        for (const auto& q : manifest.queries) {
          if (!pred_query.empty() && q.query_id != pred_query) continue;
          found = true;
          const VideoEntry& v = manifest.video(q.video_id);
          lines += to_json_line(predict(ckpt.model, read_features(manifest.feature_file(v)),
                                        v.duration_s, q.sentence, pred_k, nms, q.query_id)) +
                   "\n";
        }
        if (!found) throw std::invalid_argument("unknown query '" + pred_query + "'");
      }
      write_or_print(pred_out, lines);
    } else if (*dump) {
      const Checkpoint ckpt = load_checkpoint(dump_ckpt);
      const Manifest manifest = load_manifest(dump_manifest);
      const QueryEntry* query = nullptr;
      for (const auto& q : manifest.queries)
        if (q.query_id == dump_query) query = &q;
      if (!query) throw std::invalid_argument("unknown query '" + dump_query + "'");
      const VideoEntry& v = manifest.video(query->video_id);
      const json map = export_score_map(ckpt.model, read_features(manifest.feature_file(v)),
                                        query->sentence, query->query_id);
      write_or_print(dump_out, map.dump() + "\n");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
