#include "motformer/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace motformer {
namespace {

MatchResult finish(int num_dets, int num_tracks, std::vector<std::pair<int, int>> matched) {
  MatchResult r;
  std::vector<bool> det_used(num_dets, false), trk_used(num_tracks, false);
  for (auto [d, t] : matched) {
    det_used[d] = true;
    trk_used[t] = true;
  }
  std::sort(matched.begin(), matched.end());
  r.matched = std::move(matched);
  for (int d = 0; d < num_dets; ++d)
    if (!det_used[d]) r.unmatched_detections.push_back(d);
  for (int t = 0; t < num_tracks; ++t)
    if (!trk_used[t]) r.unmatched_tracks.push_back(t);
  return r;
}

// Square Hungarian (Kuhn-Munkres with potentials), O(n^3). Returns the
// column assigned to each row.
std::vector<int> solve_square(const ad::Matrix& a) {
  const int n = static_cast<int>(a.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

MatchResult greedy_match(const AffinityTable& table, double min_affinity) {
  const int num_dets = static_cast<int>(table.detection_scores.size());
  std::vector<std::vector<const AffinityEntry*>> by_det(num_dets);
  for (const AffinityEntry& e : table.entries) by_det[e.detection].push_back(&e);

  std::vector<int> order(num_dets);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return table.detection_scores[a] > table.detection_scores[b];
  });

  std::vector<bool> track_taken(table.num_tracks, false);
  std::vector<std::pair<int, int>> matched;
  for (int d : order) {
    const AffinityEntry* best = nullptr;
    for (const AffinityEntry* e : by_det[d]) {
      if (track_taken[e->track] || !(e->score > min_affinity)) continue;
      if (best == nullptr || e->score > best->score ||
          (e->score == best->score && e->track < best->track))
        best = e;
    }
    if (best != nullptr) {
      track_taken[best->track] = true;
      matched.emplace_back(d, best->track);
    }
  }
  return finish(num_dets, table.num_tracks, std::move(matched));
}

Assignment hungarian(const ad::Matrix& cost,
                     const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& forbid) {
  Assignment out;
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) return out;
  const int n = std::max(rows, cols);

  double span = 0.0;
  bool any_allowed = false;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (!forbid(r, c)) {
        span = std::max(span, std::abs(cost(r, c)));
        any_allowed = true;
      }
  if (!any_allowed) return out;
  // Forbidden cells cost more than any complete set of allowed cells, so the
  // solver first maximizes the number of allowed pairs.
  const double big = (span + 1.0) * 2.0 * n + 1.0;

  ad::Matrix square = ad::Matrix::Zero(n, n);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) square(r, c) = forbid(r, c) ? big : cost(r, c);
  // Padding rows/columns stay at zero: they absorb surplus at no cost.
  for (int r = 0; r < rows; ++r)
    for (int c = cols; c < n; ++c) square(r, c) = big;
  for (int r = rows; r < n; ++r)
    for (int c = 0; c < n; ++c) square(r, c) = 0.0;

  const std::vector<int> assign = solve_square(square);
  for (int r = 0; r < rows; ++r) {
    const int c = assign[r];
    if (c < 0 || c >= cols || forbid(r, c)) continue;
    out.pairs.emplace_back(r, c);
    out.total_cost += cost(r, c);
  }
  return out;
}

MatchResult hungarian_match(const AffinityTable& table, double min_affinity) {
  const int num_dets = static_cast<int>(table.detection_scores.size());
  ad::Matrix cost = ad::Matrix::Constant(num_dets, table.num_tracks, 1.0);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> forbid =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(num_dets, table.num_tracks, true);
  for (const AffinityEntry& e : table.entries) {
    if (!(e.score > min_affinity)) continue;
    cost(e.detection, e.track) = 1.0 - e.score;
    forbid(e.detection, e.track) = false;
  }
  const Assignment a = hungarian(cost, forbid);
  return finish(num_dets, table.num_tracks, a.pairs);
}

std::vector<int> assign_label_indices(std::span<const Box3D> detections,
                                      std::span<const LabeledBox> ground_truth, double min_iou) {
  const int nd = static_cast<int>(detections.size());
  const int ng = static_cast<int>(ground_truth.size());
  std::vector<int> out(nd, -1);
  if (nd == 0 || ng == 0) return out;
  ad::Matrix cost(nd, ng);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> forbid(nd, ng);
  for (int d = 0; d < nd; ++d) {
    for (int g = 0; g < ng; ++g) {
      const double iou = iou_3d(detections[d], ground_truth[g].box);
      cost(d, g) = 1.0 - iou;
      forbid(d, g) = iou < min_iou;
    }
  }
  for (auto [d, g] : hungarian(cost, forbid).pairs) out[d] = g;
  return out;
}

std::vector<std::optional<int>> assign_labels(std::span<const Box3D> detections,
                                              std::span<const LabeledBox> ground_truth,
                                              double min_iou) {
  std::vector<std::optional<int>> out(detections.size());
  const auto idx = assign_label_indices(detections, ground_truth, min_iou);
  for (std::size_t d = 0; d < idx.size(); ++d)
    if (idx[d] >= 0) out[d] = ground_truth[idx[d]].id;
  return out;
}

}  // namespace motformer
