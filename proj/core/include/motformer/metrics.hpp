#pragma once

#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "motformer/geometry.hpp"

namespace motformer {

struct EvalConfig {
  double match_distance = 2.0;   // meters, ground-plane centers
  int recall_samples = 40;
  std::vector<int> classes;      // class ids to evaluate; empty = every class in the ground truth
};

void validate(const EvalConfig& cfg);

// Per-frame (or accumulated) CLEAR-MOT counts.
struct FrameEvalCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long ids = 0;
  long frag = 0;
  double distance_sum = 0.0;   // over matched pairs

  FrameEvalCounts& operator+=(const FrameEvalCounts& o);
  long gt() const { return tp + fn; }
};

// Correspondence memory carried across the frames of one sequence.
struct MatchMemory {
  std::unordered_map<int, int> previous;     // gt id -> track id matched in the previous frame
  std::unordered_map<int, int> last_track;   // gt id -> most recent matched track id
  std::unordered_map<int, bool> was_tracked; // gt id -> tracked in its last appearance
  std::unordered_map<int, int> tracked_frames;
  std::unordered_map<int, int> total_frames;
};

struct FrameMatch {
  std::vector<std::pair<int, int>> pairs;    // (gt index, prediction index)
  FrameEvalCounts counts;
};

/// CLEAR-MOT matching of one frame. Pairs from the previous frame that are
/// still within match_distance are kept; the rest are matched greedily by
/// ascending center distance (ties: lower gt index, then lower prediction
/// index). An identity switch is a gt matched to a track id other than its
/// last matched one; a fragmentation is a gt re-acquired after being
/// untracked in its previous appearance.
FrameMatch match_frame(const std::vector<LabeledBox>& predictions,
                       const std::vector<LabeledBox>& ground_truth, double match_distance,
                       MatchMemory& memory);

/// 1 - (FP + FN + IDS) / gt.
double mota(const FrameEvalCounts& counts, long gt_total);

/// Recall-normalized MOTA, clamped to [0, 1].
double motar(const FrameEvalCounts& counts, double recall, long positives);

// One sequence: per frame predictions (ids are track ids, scores used for
// thresholds) and ground truth (ids are gt ids).
struct EvalSequence {
  std::vector<std::vector<LabeledBox>> predictions;
  std::vector<std::vector<LabeledBox>> ground_truth;
};

struct SweepResult {
  FrameEvalCounts counts;
  int mostly_tracked = 0;
  int mostly_lost = 0;
  int trajectories = 0;
};

/// Runs match_frame over all sequences for one class, keeping predictions
/// with score >= threshold.
SweepResult evaluate_class(const std::vector<EvalSequence>& sequences, int class_id,
                           double match_distance, double threshold);

struct CurvePoint {
  double recall = 0.0;           // target
  double threshold = 0.0;
  bool achieved = false;
  double motar = 0.0;
  double mota = 0.0;
  double motp = 0.0;
};

struct ClassMetrics {
  int class_id = 0;
  long gt_total = 0;
  double amota = 0.0;
  double amotp = 0.0;
  // Secondary metrics at the threshold with the highest MOTA.
  double best_threshold = -std::numeric_limits<double>::infinity();
  double mota = 0.0;
  double motp = 0.0;
  double recall = 0.0;
  long ids = 0;
  long frag = 0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
  int mostly_tracked = 0;
  int mostly_lost = 0;
  int trajectories = 0;
  std::vector<CurvePoint> curve;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  // Unweighted means of the ratio metrics; sums of the counts.
  double amota = 0.0;
  double amotp = 0.0;
  double mota = 0.0;
  double motp = 0.0;
  long ids = 0;
  long frag = 0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
  int mostly_tracked = 0;
  int mostly_lost = 0;
};

/// Recall targets k / (n - 1) for k = 1..n-1.
std::vector<double> recall_targets(int recall_samples);

/// AMOTA and AMOTP for one class. Thresholds come from the scores of the
/// true positives of an unthresholded pass; the threshold for recall r is the
/// score of the ceil(r * P)-th best true positive. Unreachable recall points
/// score MOTAR 0; AMOTP averages the reachable points only (match_distance if
/// there are none).
ClassMetrics amota_amotp(const std::vector<EvalSequence>& sequences, int class_id,
                         const EvalConfig& cfg);

/// Adds MOTA, MOTP, IDS, FRAG, MT, ML, TP, FP, FN at the best-MOTA threshold.
void secondary_metrics(const std::vector<EvalSequence>& sequences, ClassMetrics& metrics,
                       const EvalConfig& cfg);

/// Full per-class evaluation plus averages over classes with ground truth.
MetricsReport evaluate(const std::vector<EvalSequence>& sequences, const EvalConfig& cfg);

}  // namespace motformer
