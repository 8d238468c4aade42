#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "motformer/config.hpp"
#include "motformer/metrics.hpp"
#include "motformer/model.hpp"
#include "motformer/training.hpp"

namespace motformer {

/// Simulated scenes for a split, seeded from the run config.
std::vector<TrainingScene> generate_split(const RunConfig& cfg, std::string_view split, int count);

std::vector<std::string> class_names(const RunConfig& cfg);

using TrackOutput = std::vector<std::vector<LabeledBox>>;

std::vector<TrackOutput> track_scenes(Model& model, const TrackerConfig& cfg,
                                      const std::vector<TrainingScene>& scenes);
std::vector<TrackOutput> track_scenes_baseline(const BaselineConfig& cfg,
                                               const std::vector<TrainingScene>& scenes);

MetricsReport evaluate_outputs(const std::vector<TrackOutput>& outputs,
                               const std::vector<TrainingScene>& scenes, const EvalConfig& cfg);

struct VelocityErrors {
  double head = 0.0;       // mean |v_head - v_gt| over true positives
  double detector = 0.0;   // mean |v_detector - v_gt| over the same detections
  long count = 0;
};

/// True positives are detections matched to ground truth by assign_labels.
VelocityErrors velocity_errors(Model& model, const TrackerConfig& cfg,
                               const std::vector<TrainingScene>& scenes, double min_iou);

/// Builds a model from cfg.model seeded from cfg.seed.
Model make_model(const RunConfig& cfg);

}  // namespace motformer
