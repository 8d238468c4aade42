#include "motformer/graph.hpp"

#include <stdexcept>

namespace motformer {

std::vector<int> SparseGraph::src_indices() const {
  std::vector<int> out;
  out.reserve(edges.size());
  for (const Edge& e : edges) out.push_back(e.src);
  return out;
}

std::vector<int> SparseGraph::dst_indices() const {
  std::vector<int> out;
  out.reserve(edges.size());
  for (const Edge& e : edges) out.push_back(e.dst);
  return out;
}

void validate(const GraphBuildConfig& cfg) {
  if (!(cfg.neighbor_radius > 0.0)) throw ConfigError("graph.neighbor_radius must be > 0");
  if (!(cfg.radius_multiplier > 0.0)) throw ConfigError("graph.radius_multiplier must be > 0");
  for (double r : cfg.class_radii)
    if (!(r > 0.0)) throw ConfigError("graph.class_radii entries must be > 0");
}

std::vector<double> default_class_radii(const std::vector<ClassSpec>& classes,
                                        double frame_period, int max_age, double margin) {
  std::vector<double> radii;
  radii.reserve(classes.size());
  for (const ClassSpec& c : classes) radii.push_back(c.max_speed * frame_period * max_age + margin);
  return radii;
}

ad::Matrix detection_features(std::span<const Box3D> boxes, int num_classes,
                              std::array<double, 2> origin) {
  ad::Matrix x = ad::Matrix::Zero(static_cast<ad::Index>(boxes.size()),
                                  detection_feature_dim(num_classes));
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box3D& b = boxes[i];
    auto row = x.row(static_cast<ad::Index>(i));
    row(0) = b.center[0] - origin[0];
    row(1) = b.center[1] - origin[1];
    row(2) = b.center[2];
    row(3) = b.size[0];
    row(4) = b.size[1];
    row(5) = b.size[2];
    row(6) = b.yaw;
    row(7) = b.velocity[0];
    row(8) = b.velocity[1];
    if (b.class_id < 0 || b.class_id >= num_classes)
      throw std::out_of_range("detection class id outside the class table");
    row(9 + b.class_id) = 1.0;
    row(9 + num_classes) = b.score;
  }
  return x;
}

ad::Matrix edge_feature_matrix(const SparseGraph& graph) {
  ad::Matrix x(static_cast<ad::Index>(graph.features.size()), kEdgeFeatureDim);
  for (std::size_t e = 0; e < graph.features.size(); ++e)
    for (int k = 0; k < kEdgeFeatureDim; ++k) x(static_cast<ad::Index>(e), k) = graph.features[e][k];
  return x;
}

SparseGraph build_radius_graph(std::span<const Box3D> boxes, double radius) {
  SparseGraph g;
  g.num_src = g.num_dst = static_cast<int>(boxes.size());
  for (int i = 0; i < g.num_dst; ++i) {
    for (int j = 0; j < g.num_src; ++j) {
      if (i == j || center_distance(boxes[i], boxes[j]) <= radius) g.edges.push_back({j, i});
    }
  }
  return g;
}

SparseGraph build_detection_graph(std::span<const Box3D> detections, const GraphBuildConfig& cfg) {
  return build_radius_graph(detections, cfg.neighbor_radius);
}

std::vector<Box3D> predicted_track_boxes(std::span<const Track> tracks, int frame,
                                         double frame_period) {
  std::vector<Box3D> out;
  out.reserve(tracks.size());
  for (const Track& t : tracks) {
    const double horizon = (frame - t.last_update_frame) * frame_period;
    out.push_back(predict_box(t.box, t.velocity_est, horizon));
  }
  return out;
}

SparseGraph build_track_graph(std::span<const Track> tracks, const GraphBuildConfig& cfg,
                              int frame, double frame_period) {
  const auto predicted = predicted_track_boxes(tracks, frame, frame_period);
  return build_radius_graph(predicted, cfg.neighbor_radius);
}

SparseGraph build_association_graph(std::span<const Track> tracks,
                                    std::span<const Box3D> detections,
                                    const GraphBuildConfig& cfg, int frame, double frame_period) {
  SparseGraph g;
  g.num_src = static_cast<int>(tracks.size());
  g.num_dst = static_cast<int>(detections.size());
  const auto predicted = predicted_track_boxes(tracks, frame, frame_period);
  for (int i = 0; i < g.num_dst; ++i) {
    const Box3D& det = detections[i];
    for (int j = 0; j < g.num_src; ++j) {
      const Track& trk = tracks[j];
      if (trk.class_id != det.class_id) continue;
      const double dist = center_distance(predicted[j], det);
      if (!cfg.fully_connected_assoc) {
        if (det.class_id < 0 || det.class_id >= static_cast<int>(cfg.class_radii.size()))
          throw std::out_of_range("no association radius for class id");
        if (dist > cfg.class_radii[det.class_id] * cfg.radius_multiplier) continue;
      }
      const Box3D& ref = trk.box;
      AssociationEdgeFeature f{};
      for (int k = 0; k < 3; ++k) {
        f[k] = det.center[k] - ref.center[k];
        f[3 + k] = det.size[k] - ref.size[k];
      }
      f[6] = normalize_yaw(det.yaw - ref.yaw);
      f[7] = static_cast<double>(frame - trk.last_update_frame);
      f[8] = dist;
      g.edges.push_back({j, i});
      g.features.push_back(f);
    }
  }
  return g;
}

}  // namespace motformer
