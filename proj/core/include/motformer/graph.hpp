#pragma once

#include <array>
#include <span>
#include <vector>

#include "motformer/autodiff.hpp"
#include "motformer/geometry.hpp"
#include "motformer/simulator.hpp"
#include "motformer/track.hpp"

namespace motformer {

inline constexpr int kEdgeFeatureDim = 9;

inline constexpr int detection_feature_dim(int num_classes) { return 10 + num_classes; }

// (dx, dy, dz, dw, dl, dh, dyaw, frame_diff, predicted_center_distance)
using AssociationEdgeFeature = std::array<double, kEdgeFeatureDim>;

struct Edge {
  int src = 0;
  int dst = 0;
  bool operator==(const Edge&) const = default;
};

// Directed sparse graph. For the detection and track graphs src and dst
// index the same node set; for the association graph src indexes tracks and
// dst indexes detections, and `features` holds one entry per edge.
struct SparseGraph {
  int num_src = 0;
  int num_dst = 0;
  std::vector<Edge> edges;
  std::vector<AssociationEdgeFeature> features;

  std::vector<int> src_indices() const;
  std::vector<int> dst_indices() const;
};

struct GraphBuildConfig {
  double neighbor_radius = 10.0;
  std::vector<double> class_radii;   // indexed by class id
  double radius_multiplier = 1.0;
  bool fully_connected_assoc = false;
};

void validate(const GraphBuildConfig& cfg);

/// max_speed * frame_period * max_age + margin for each class.
std::vector<double> default_class_radii(const std::vector<ClassSpec>& classes,
                                        double frame_period, int max_age, double margin = 1.0);

/// Raw detection node features, one row per box: center relative to
/// `origin`, size, yaw, velocity, one-hot class, score.
ad::Matrix detection_features(std::span<const Box3D> boxes, int num_classes,
                              std::array<double, 2> origin);

ad::Matrix edge_feature_matrix(const SparseGraph& graph);

/// Radius graph over ground-plane centers with both edge directions and a
/// self-loop per node. Edges are ordered by (dst, src).
SparseGraph build_radius_graph(std::span<const Box3D> boxes, double radius);

SparseGraph build_detection_graph(std::span<const Box3D> detections, const GraphBuildConfig& cfg);

/// Radius graph over track centers extrapolated to `frame`.
SparseGraph build_track_graph(std::span<const Track> tracks, const GraphBuildConfig& cfg,
                              int frame, double frame_period);

/// Track centers extrapolated with their velocity estimates to `frame`.
std::vector<Box3D> predicted_track_boxes(std::span<const Track> tracks, int frame,
                                         double frame_period);

/// Bipartite track -> detection edges between same-class pairs whose
/// predicted center distance is within the class radius.
SparseGraph build_association_graph(std::span<const Track> tracks,
                                    std::span<const Box3D> detections,
                                    const GraphBuildConfig& cfg, int frame, double frame_period);

}  // namespace motformer
