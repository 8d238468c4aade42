#pragma once

#include <vector>

#include "motformer/geometry.hpp"
#include "motformer/graph.hpp"

namespace motformer {

struct BaselineConfig {
  GraphBuildConfig graph;   // class_radii gate the matches
  int max_age = 3;
  double nms_iou = 0.1;
  double frame_period = 0.5;
};

void validate(const BaselineConfig& cfg);

/// Greedy center-distance tracker with constant-velocity prediction from the
/// detector's velocity. Detections in descending score order take the
/// nearest predicted same-class track within the class radius. Spawning and
/// deletion follow the learned tracker's rules.
std::vector<std::vector<LabeledBox>> cv_greedy_track(const std::vector<std::vector<Box3D>>& frames,
                                                     const BaselineConfig& cfg);

}  // namespace motformer
