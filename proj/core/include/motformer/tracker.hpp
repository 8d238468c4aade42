#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "motformer/autodiff.hpp"
#include "motformer/geometry.hpp"
#include "motformer/graph.hpp"
#include "motformer/matching.hpp"
#include "motformer/model.hpp"
#include "motformer/track.hpp"

namespace motformer {

struct AblationFlags {
  bool use_hungarian = false;
  bool gt_identity_guided = false;
  bool no_hidden_state = false;
  bool zero_edge_features = false;
  bool fully_connected_assoc = false;
  bool no_velocity_head = false;
  double radius_multiplier = 1.0;

  bool operator==(const AblationFlags&) const = default;
};

struct TrackerConfig {
  int max_age = 3;             // T_d: deleted on the max_age-th consecutive miss
  double min_affinity = 0.5;
  double score_decay = 0.9;
  double nms_iou = 0.1;
  double frame_period = 0.5;
  bool emit_inactive = false;
  GraphBuildConfig graph;
  AblationFlags ablation;
};

void validate(const TrackerConfig& cfg);

/// Graph config with the ablation switches applied.
GraphBuildConfig effective_graph_config(const TrackerConfig& cfg);

struct TrackerState {
  std::vector<Track> tracks;
  ad::Tensor features;    // one row per track; invalid while there are no tracks
  ad::Tensor velocities;  // (vx, vy) per track, aligned with `features`
  int next_id = 0;
  std::optional<std::array<double, 2>> origin;
};

/// Re-records the carried tensors as constants on `tape`, so the previous
/// tape can be released.
void carry_to(TrackerState& state, ad::Tape& tape);

// Track list after life management. Feature rows index the stacked matrix
// [decoder detection outputs; encoder track outputs].
struct TrackUpdate {
  std::vector<Track> tracks;
  std::vector<int> feature_rows;
  std::vector<int> emitted;  // positions in `tracks` that were matched or spawned
  int next_id = 0;
};

/// Matched tracks take the detection's box, score and velocity; unmatched
/// detections spawn tracks with fresh ids; unmatched tracks age and are kept
/// iff age + 1 < max_age. Order: surviving old tracks, then new tracks by
/// detection index.
TrackUpdate update_tracks(const MatchResult& match, std::span<const Track> tracks,
                          std::span<const Box3D> detections,
                          std::span<const std::array<double, 2>> velocities,
                          std::span<const int> detection_identities, int frame, int next_id,
                          const TrackerConfig& cfg);

struct StepResult {
  std::vector<LabeledBox> output;
  std::vector<Box3D> detections;       // after NMS
  std::vector<Track> tracks;           // tracks entering this frame
  SparseGraph assoc_graph;
  ad::Tensor affinity_logits;          // E x 1, invalid when there are no detections
  ad::Tensor velocities;               // N x 2
  MatchResult match;
};

class Tracker {
 public:
  Tracker(Model& model, TrackerConfig cfg);

  const TrackerConfig& config() const { return cfg_; }

  std::vector<Box3D> preprocess(std::span<const Box3D> detections) const;

  /// One online step on raw detections (NMS applied here).
  StepResult step(ad::Tape& tape, TrackerState& state, std::span<const Box3D> detections,
                  int frame);

  /// Step on already preprocessed detections. `identities` (optional, one
  /// per detection, -1 for none) label spawned tracks and drive the
  /// ground-truth guided matching variant.
  StepResult step_preprocessed(ad::Tape& tape, TrackerState& state,
                               std::span<const Box3D> detections, int frame,
                               std::span<const int> identities = {});

  /// Folds step over the frames from an empty state with gradients off.
  std::vector<std::vector<LabeledBox>> run_sequence(
      const std::vector<std::vector<Box3D>>& frames);

 private:
  MatchResult associate(const StepResult& r, std::span<const int> identities) const;

  Model& model_;
  TrackerConfig cfg_;
  GraphBuildConfig graph_cfg_;
};

}  // namespace motformer
