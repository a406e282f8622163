#include "dualmap/checkpoint.hpp"
#include "dualmap/evaluation.hpp"
#include "dualmap/feature_io.hpp"
#include "dualmap/synthetic.hpp"
#include "dualmap/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <chrono>

namespace py = pybind11;
using namespace dualmap;

namespace {

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

using Interval = std::tuple<double, double, double>;

std::vector<Interval> as_tuples(const std::vector<ScoredInterval>& ranked) {
  std::vector<Interval> out;
  for (const auto& r : ranked) out.emplace_back(r.interval.start(), r.interval.end(), r.score);
  return out;
}

std::string generate(const std::string& out_dir, std::uint64_t seed, int videos, int clips,
                     int steps, int feature_dim, double noise, double code_scale) {
  SyntheticSpec spec;
  spec.video_count = videos;
  spec.clips_per_video = clips;
  spec.steps_per_video = steps;
  spec.feature_dim = feature_dim;
  spec.noise = noise;
  spec.code_scale = code_scale;
  generate_synthetic_dataset(spec, seed, out_dir);
  return (std::filesystem::path(out_dir) / "manifest.json").string();
}

py::object train(const std::string& manifest, const std::string& out, const std::string& preset_name,
                 const py::dict& overrides, double time_budget_s) {
  const TrainConfig cfg = apply_json(preset(preset_name), from_python(overrides));
  Trainer trainer(cfg, load_manifest(manifest));
  {
    py::gil_scoped_release release;
    trainer.run({}, std::chrono::duration<double>(time_budget_s));
  }
  save_checkpoint(out, trainer.config(), trainer.model(), trainer.trace());
  return to_python(trace_to_json(trainer.trace()));
}

py::object evaluate(const std::string& checkpoint, const std::string& manifest) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  return to_python(evaluate_recall(ck.model, load_manifest(manifest), ck.config.nms_threshold)
                       .to_json());
}

std::vector<Interval> predict_py(const std::string& checkpoint, const ad::Matrix& features,
                                 double duration_s, const std::string& sentence, int k) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  return as_tuples(
      predict(ck.model, features, duration_s, sentence, k, ck.config.nms_threshold).ranked);
}

py::object dump_map(const std::string& checkpoint, const ad::Matrix& features,
                    const std::string& sentence) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  return to_python(export_score_map(ck.model, features, sentence));
}

std::vector<Interval> nms(const std::vector<Interval>& candidates, double threshold) {
  std::vector<ScoredInterval> c;
  for (const auto& [s, e, score] : candidates) c.push_back({TimeInterval(s, e), score});
  return as_tuples(nms_select(std::move(c), threshold));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual-path temporal-map video grounding";

  py::register_exception<ManifestError>(m, "ManifestError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.def("temporal_iou",
        [](double s1, double e1, double s2, double e2) {
          return temporal_iou(TimeInterval(s1, e1), TimeInterval(s2, e2));
        },
        py::arg("start_a"), py::arg("end_a"), py::arg("start_b"), py::arg("end_b"));
  m.def("scale_iou", &scale_iou, py::arg("o"), py::arg("t_min") = 0.3, py::arg("t_max") = 0.7);
  m.def("validity_mask",
        [](int n, int g) {
          const ValidityMask mask = build_validity_mask(n, g);
          Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(n, n);
          for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) out(a, b) = mask.valid(a, b);
          return out;
        },
        py::arg("n"), py::arg("short_tier"));
  m.def("calibrate_agnostic",
        [](const std::vector<double>& s_iou, const std::vector<double>& s_mm, double exponent) {
          const AgnosticProbabilities p = calibrate_agnostic(s_iou, s_mm, exponent);
          return py::dict(py::arg("p_iou") = p.p_iou, py::arg("p_mm") = p.p_mm,
                          py::arg("p_a") = p.p_a);
        },
        py::arg("s_iou"), py::arg("s_mm"), py::arg("exponent") = 0.3);
  m.def("nms_select", &nms, py::arg("candidates"), py::arg("threshold") = 0.4);

  m.def("preset", [](const std::string& name) { return to_python(to_json(preset(name))); },
        py::arg("name") = "desk");
  m.def("read_features", [](const std::string& path) { return read_features(path); },
        py::arg("path"));
  m.def("generate_synthetic", &generate, py::arg("out_dir"), py::arg("seed") = 0,
        py::arg("videos") = 40, py::arg("clips") = 64, py::arg("steps") = 8,
        py::arg("feature_dim") = 64, py::arg("noise") = 0.1, py::arg("code_scale") = 1.0,
        "Writes a synthetic dataset and returns the manifest path.");
  m.def("train", &train, py::arg("manifest"), py::arg("out"), py::arg("preset") = "desk",
        py::arg("config") = py::dict(), py::arg("time_budget_s") = 0.0,
        "Trains, writes a checkpoint directory and returns the loss trace.");
  m.def("evaluate", &evaluate, py::arg("checkpoint"), py::arg("manifest"));
  m.def("predict", &predict_py, py::arg("checkpoint"), py::arg("features"), py::arg("duration_s"),
        py::arg("sentence"), py::arg("k") = 5);
  m.def("dump_map", &dump_map, py::arg("checkpoint"), py::arg("features"), py::arg("sentence"));
}
