#include "motformer/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace motformer {
namespace {

using Point = std::array<double, 2>;

double cross(const Point& o, const Point& a, const Point& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

Point segment_line_intersection(const Point& p, const Point& q, const Point& a,
                                const Point& b) {
  const double cp = cross(a, b, p);
  const double cq = cross(a, b, q);
  const double t = cp / (cp - cq);
  return {p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])};
}

double polygon_area(const std::vector<Point>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % poly.size()];
    twice += p[0] * q[1] - q[0] * p[1];
  }
  return std::abs(twice) * 0.5;
}

double box_volume(const Box3D& b) { return b.size[0] * b.size[1] * b.size[2]; }

}  // namespace

double normalize_yaw(double yaw) {
  double y = std::remainder(yaw, 2.0 * kPi);  // [-pi, pi]
  if (y <= -kPi) y += 2.0 * kPi;
  return y;
}

bool is_valid(const Box3D& box) {
  for (double s : box.size)
    if (!(s > 0.0)) return false;
  if (!(box.yaw > -kPi && box.yaw <= kPi)) return false;
  return box.score >= 0.0 && box.score <= 1.0 && box.frame >= 0;
}

double center_distance(const Box3D& a, const Box3D& b) {
  return std::hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]);
}

std::array<Point, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = 0.5 * box.size[1];
  const double hw = 0.5 * box.size[0];
  constexpr std::array<std::array<double, 2>, 4> kLocal{
      {{1.0, 1.0}, {-1.0, 1.0}, {-1.0, -1.0}, {1.0, -1.0}}};
  std::array<Point, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    const double lx = kLocal[i][0] * hl;
    const double ly = kLocal[i][1] * hw;
    out[i] = {box.center[0] + c * lx - s * ly, box.center[1] + s * lx + c * ly};
  }
  return out;
}

double convex_intersection_area(std::span<const Point> subject,
                                std::span<const Point> clip) {
  std::vector<Point> output(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Point& a = clip[e];
    const Point& b = clip[(e + 1) % clip.size()];
    std::vector<Point> input;
    input.swap(output);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Point& cur = input[i];
      const Point& prev = input[(i + input.size() - 1) % input.size()];
      const bool cur_in = cross(a, b, cur) >= 0.0;
      const bool prev_in = cross(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) output.push_back(segment_line_intersection(prev, cur, a, b));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(segment_line_intersection(prev, cur, a, b));
      }
    }
  }
  return polygon_area(output);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double za0 = a.center[2] - 0.5 * a.size[2];
  const double za1 = a.center[2] + 0.5 * a.size[2];
  const double zb0 = b.center[2] - 0.5 * b.size[2];
  const double zb1 = b.center[2] + 0.5 * b.size[2];
  const double dz = std::min(za1, zb1) - std::max(za0, zb0);
  if (dz <= 0.0) return 0.0;

  // Footprints cannot overlap beyond the sum of circumradii.
  const double ra = 0.5 * std::hypot(a.size[0], a.size[1]);
  const double rb = 0.5 * std::hypot(b.size[0], b.size[1]);
  if (center_distance(a, b) >= ra + rb) return 0.0;

  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const double area = convex_intersection_area(ca, cb);
  if (area <= 0.0) return 0.0;
  const double inter = area * dz;
  const double uni = box_volume(a) + box_volume(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::size_t> nms_indices(std::span<const Box3D> detections,
                                     double iou_threshold) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return detections[i].score > detections[j].score;
  });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (std::size_t k : kept) {
      if (iou_3d(detections[i], detections[k]) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<Box3D> nms(std::span<const Box3D> detections, double iou_threshold) {
  std::vector<Box3D> out;
  for (std::size_t i : nms_indices(detections, iou_threshold)) out.push_back(detections[i]);
  return out;
}

Box3D predict_box(const Box3D& box, std::array<double, 2> velocity, double dt) {
  Box3D out = box;
  out.center[0] += velocity[0] * dt;
  out.center[1] += velocity[1] * dt;
  return out;
}

}  // namespace motformer
