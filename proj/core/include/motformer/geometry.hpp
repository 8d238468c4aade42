#pragma once

#include <array>
#include <numbers>
#include <span>
#include <vector>

namespace motformer {

inline constexpr double kPi = std::numbers::pi;

// Oriented 3D box. `size` is (width, length, height); length runs along the
// heading. `center` is the geometric center of the box.
struct Box3D {
  std::array<double, 3> center{0.0, 0.0, 0.0};
  std::array<double, 3> size{1.0, 1.0, 1.0};
  double yaw = 0.0;
  std::array<double, 2> velocity{0.0, 0.0};
  int class_id = 0;
  double score = 1.0;
  int frame = 0;
  double timestamp = 0.0;

  bool operator==(const Box3D&) const = default;
};

// A box carrying an identity: ground-truth id or track id depending on use.
struct LabeledBox {
  int id = -1;
  Box3D box;

  bool operator==(const LabeledBox&) const = default;
};

/// Wraps an angle into (-pi, pi].
double normalize_yaw(double yaw);

/// True when the box satisfies the size/yaw/score invariants.
bool is_valid(const Box3D& box);

/// Ground-plane (x, y) Euclidean distance between box centers.
double center_distance(const Box3D& a, const Box3D& b);

/// Corners of the bird's-eye-view footprint, counter-clockwise.
std::array<std::array<double, 2>, 4> bev_corners(const Box3D& box);

/// Area of the intersection of two convex counter-clockwise polygons.
double convex_intersection_area(std::span<const std::array<double, 2>> subject,
                                std::span<const std::array<double, 2>> clip);

/// Yaw-aware 3D IoU: BEV polygon overlap times vertical interval overlap,
/// divided by the union volume. Returns 0 for disjoint boxes.
double iou_3d(const Box3D& a, const Box3D& b);

/// Greedy score-descending suppression. A box is kept iff its IoU with every
/// already kept box is <= iou_threshold. Class agnostic. Kept boxes are
/// returned in their original input order.
std::vector<Box3D> nms(std::span<const Box3D> detections, double iou_threshold);

/// Indices (into `detections`) of the boxes kept by nms, ascending.
std::vector<std::size_t> nms_indices(std::span<const Box3D> detections,
                                     double iou_threshold);

/// Constant-velocity extrapolation of the box center over dt seconds.
Box3D predict_box(const Box3D& box, std::array<double, 2> velocity, double dt);

}  // namespace motformer
