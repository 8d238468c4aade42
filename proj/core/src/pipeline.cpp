#include "motformer/pipeline.hpp"

#include <cmath>
#include <memory>

#include "motformer/baselines.hpp"
#include "motformer/matching.hpp"

namespace motformer {

std::vector<TrainingScene> generate_split(const RunConfig& cfg, std::string_view split, int count) {
  std::vector<TrainingScene> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const SceneConfig sc = scene_for(cfg, split, i);
    TrainingScene s;
    s.ground_truth = generate_scene(sc);
    s.detections = corrupt(s.ground_truth, sc.classes, noise_for(cfg, split, i));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> class_names(const RunConfig& cfg) {
  std::vector<std::string> names;
  for (const ClassSpec& c : cfg.scene.classes) names.push_back(c.name);
  return names;
}

std::vector<TrackOutput> track_scenes(Model& model, const TrackerConfig& cfg,
                                      const std::vector<TrainingScene>& scenes) {
  Tracker tracker(model, cfg);
  std::vector<TrackOutput> out;
  for (const TrainingScene& s : scenes) out.push_back(tracker.run_sequence(s.detections));
  return out;
}

std::vector<TrackOutput> track_scenes_baseline(const BaselineConfig& cfg,
                                               const std::vector<TrainingScene>& scenes) {
  std::vector<TrackOutput> out;
  for (const TrainingScene& s : scenes) out.push_back(cv_greedy_track(s.detections, cfg));
  return out;
}

MetricsReport evaluate_outputs(const std::vector<TrackOutput>& outputs,
                               const std::vector<TrainingScene>& scenes, const EvalConfig& cfg) {
  std::vector<EvalSequence> seqs;
  for (std::size_t i = 0; i < scenes.size(); ++i)
    seqs.push_back({outputs.at(i), scenes[i].ground_truth.frames});
  return evaluate(seqs, cfg);
}

VelocityErrors velocity_errors(Model& model, const TrackerConfig& cfg,
                               const std::vector<TrainingScene>& scenes, double min_iou) {
  Tracker tracker(model, cfg);
  VelocityErrors err;
  for (const TrainingScene& s : scenes) {
    TrackerState state;
    std::unique_ptr<ad::Tape> tape;
    for (std::size_t f = 0; f < s.detections.size(); ++f) {
      auto next = std::make_unique<ad::Tape>();
      next->set_grad_enabled(false);
      carry_to(state, *next);
      tape = std::move(next);
      StepResult r = tracker.step(*tape, state, s.detections[f], static_cast<int>(f));
      if (r.detections.empty()) continue;
      const auto& gt = s.ground_truth.frames[f];
      const auto idx = assign_label_indices(r.detections, gt, min_iou);
      const ad::Matrix& v = r.velocities.value();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0) continue;
        const auto& gv = gt[idx[i]].box.velocity;
        const auto& dv = r.detections[i].velocity;
        err.head += std::hypot(v(static_cast<ad::Index>(i), 0) - gv[0], v(static_cast<ad::Index>(i), 1) - gv[1]);
        err.detector += std::hypot(dv[0] - gv[0], dv[1] - gv[1]);
        err.count += 1;
      }
    }
  }
  if (err.count > 0) {
    err.head /= static_cast<double>(err.count);
    err.detector /= static_cast<double>(err.count);
  }
  return err;
}

Model make_model(const RunConfig& cfg) { return Model(cfg.model, cfg.seed ^ 0x6d6f64656cULL); }

}  // namespace motformer
