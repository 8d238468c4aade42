#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "motformer/autodiff.hpp"
#include "motformer/geometry.hpp"

namespace motformer {

struct AffinityEntry {
  int track = 0;
  int detection = 0;
  double score = 0.0;
};

struct AffinityTable {
  int num_tracks = 0;
  std::vector<AffinityEntry> entries;  // at most one per (track, detection)
  std::vector<double> detection_scores;
};

struct MatchResult {
  std::vector<std::pair<int, int>> matched;  // (detection, track)
  std::vector<int> unmatched_detections;
  std::vector<int> unmatched_tracks;

  bool operator==(const MatchResult&) const = default;
};

/// Detections in descending score order (ties: lower index first) each take
/// their highest-affinity unmatched track with affinity > min_affinity
/// (ties: lower track index first). Output lists are sorted ascending.
MatchResult greedy_match(const AffinityTable& table, double min_affinity);

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), ascending by row
  double total_cost = 0.0;
};

/// Minimum-cost assignment over allowed cells (forbid(r, c) != 0 disallows a
/// cell). Among assignments with the largest number of allowed pairs, returns
/// one of minimum total cost. Surplus rows/columns stay unassigned.
Assignment hungarian(const ad::Matrix& cost, const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& forbid);

/// Hungarian matching of the affinity table with cost 1 - affinity; pairs at
/// or below min_affinity are forbidden.
MatchResult hungarian_match(const AffinityTable& table, double min_affinity);

/// Per-detection ground-truth id from Hungarian matching on 1 - IoU, pairs
/// with IoU < min_iou forbidden. Unmatched detections get std::nullopt.
std::vector<std::optional<int>> assign_labels(std::span<const Box3D> detections,
                                              std::span<const LabeledBox> ground_truth,
                                              double min_iou);

/// Same as assign_labels but returns the matched ground-truth index.
std::vector<int> assign_label_indices(std::span<const Box3D> detections,
                                      std::span<const LabeledBox> ground_truth, double min_iou);

}  // namespace motformer
