#include <gtest/gtest.h>

#include <cmath>

#include "motformer/geometry.hpp"
#include "test_util.hpp"

using namespace motformer;
using motformer::testing::make_box;
using motformer::testing::random_box;

namespace {

bool inside(const Box3D& b, double x, double y, double z) {
  const double dx = x - b.center[0], dy = y - b.center[1];
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double along = c * dx + s * dy;     // heading axis: length
  const double across = -s * dx + c * dy;   // width
  return std::abs(along) <= b.size[1] / 2 && std::abs(across) <= b.size[0] / 2 &&
         std::abs(z - b.center[2]) <= b.size[2] / 2;
}

// Midpoint-rule voxel count over the joint bounding cube.
double voxel_iou(const Box3D& a, const Box3D& b, int n) {
  double lo[3], hi[3];
  for (int k = 0; k < 3; ++k) {
    const double ra = k < 2 ? std::hypot(a.size[0], a.size[1]) / 2 : a.size[2] / 2;
    const double rb = k < 2 ? std::hypot(b.size[0], b.size[1]) / 2 : b.size[2] / 2;
    lo[k] = std::min(a.center[k] - ra, b.center[k] - rb);
    hi[k] = std::max(a.center[k] + ra, b.center[k] + rb);
  }
  long both = 0, either = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const double x = lo[0] + (i + 0.5) * (hi[0] - lo[0]) / n;
        const double y = lo[1] + (j + 0.5) * (hi[1] - lo[1]) / n;
        const double z = lo[2] + (k + 0.5) * (hi[2] - lo[2]) / n;
        const bool ia = inside(a, x, y, z), ib = inside(b, x, y, z);
        both += ia && ib;
        either += ia || ib;
      }
  return either == 0 ? 0.0 : static_cast<double>(both) / either;
}

std::vector<std::size_t> nms_reference(const std::vector<Box3D>& boxes, double thr) {
  std::vector<std::size_t> order(boxes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // Selection by repeated scans: highest score first, lower index on ties.
  std::vector<bool> done(boxes.size(), false);
  std::vector<std::size_t> kept;
  for (std::size_t step = 0; step < boxes.size(); ++step) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (!done[i] && (best == boxes.size() || boxes[i].score > boxes[best].score)) best = i;
    done[best] = true;
    bool ok = true;
    for (std::size_t k : kept) ok = ok && iou_3d(boxes[best], boxes[k]) <= thr;
    if (ok) kept.push_back(best);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace

TEST(Iou, IdenticalBoxIsOne) {
  const Box3D b = make_box(1, 2, 0.5, 2, 4, 1.5, 0.7);
  EXPECT_NEAR(iou_3d(b, b), 1.0, 1e-9);
}

TEST(Iou, FarApartIsZero) {
  EXPECT_EQ(iou_3d(make_box(0, 0, 0, 4, 2, 1.5), make_box(100, 0, 0, 4, 2, 1.5)), 0.0);
}

TEST(Iou, AxisAlignedUnitOffsetIsOneThird) {
  const Box3D a = make_box(0, 0, 0, 2, 2, 2);
  const Box3D b = make_box(1, 0, 0, 2, 2, 2);
  EXPECT_NEAR(iou_3d(a, b), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(voxel_iou(a, b, 60), 1.0 / 3.0, 2e-2);
}

TEST(Iou, MatchesVoxelOracleOnRandomOrientedPairs) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 25; ++t) {
    Box3D a = random_box(rng, 1.0);
    Box3D b = random_box(rng, 1.0);
    EXPECT_NEAR(iou_3d(a, b), voxel_iou(a, b, 70), 2.5e-2) << "pair " << t;
  }
}

TEST(Iou, SymmetricAndRigidInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(-kPi, kPi), off(-50, 50);
  for (int t = 0; t < 200; ++t) {
    Box3D a = random_box(rng, 2.0), b = random_box(rng, 2.0);
    const double iou = iou_3d(a, b);
    EXPECT_GE(iou, 0.0);
    EXPECT_LE(iou, 1.0);
    EXPECT_NEAR(iou, iou_3d(b, a), 1e-12);
    const double th = ang(rng), tx = off(rng), ty = off(rng);
    auto move = [&](Box3D x) {
      const double c = std::cos(th), s = std::sin(th);
      const double nx = c * x.center[0] - s * x.center[1] + tx;
      const double ny = s * x.center[0] + c * x.center[1] + ty;
      x.center[0] = nx;
      x.center[1] = ny;
      x.yaw = normalize_yaw(x.yaw + th);
      return x;
    };
    EXPECT_NEAR(iou_3d(move(a), move(b)), iou, 1e-6);
  }
}

TEST(CenterDistance, Basics) {
  EXPECT_EQ(center_distance(make_box(1, 1, 0, 1, 1, 1), make_box(1, 1, 5, 1, 1, 1)), 0.0);
  EXPECT_DOUBLE_EQ(center_distance(make_box(0, 0, 0, 1, 1, 1), make_box(3, 4, 0, 1, 1, 1)), 5.0);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const Box3D a = random_box(rng), b = random_box(rng);
    const double dx = a.center[0] - b.center[0], dy = a.center[1] - b.center[1];
    EXPECT_NEAR(center_distance(a, b), std::sqrt(dx * dx + dy * dy), 1e-12);
    EXPECT_DOUBLE_EQ(center_distance(a, b), center_distance(b, a));
  }
}

TEST(NormalizeYaw, HalfOpenRange) {
  EXPECT_DOUBLE_EQ(normalize_yaw(kPi), kPi);
  EXPECT_DOUBLE_EQ(normalize_yaw(-kPi), kPi);
  EXPECT_NEAR(normalize_yaw(3 * kPi / 2), -kPi / 2, 1e-12);
  for (double y = -20; y < 20; y += 0.37) {
    const double n = normalize_yaw(y);
    EXPECT_GT(n, -kPi);
    EXPECT_LE(n, kPi);
    EXPECT_NEAR(std::remainder(n - y, 2 * kPi), 0.0, 1e-9);
  }
}

TEST(Nms, SingleAndEmpty) {
  EXPECT_TRUE(nms({}, 0.1).empty());
  const Box3D b = make_box(1, 2, 3, 1, 2, 3, 0.3, 1, 0.4);
  const std::vector<Box3D> one{b};
  ASSERT_EQ(nms(one, 0.1).size(), 1u);
  EXPECT_EQ(nms(one, 0.1)[0], b);
}

TEST(Nms, DuplicateKeepsHigherScore) {
  const std::vector<Box3D> boxes{make_box(0, 0, 0, 2, 4, 1.5, 0, 0, 0.8), make_box(0, 0, 0, 2, 4, 1.5, 0, 0, 0.9)};
  const auto kept = nms(boxes, 0.1);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_DOUBLE_EQ(kept[0].score, 0.9);
}

TEST(Nms, MatchesQuadraticReferenceAndProperties) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 100; ++t) {
    std::vector<Box3D> boxes;
    for (int i = 0; i < 10; ++i) boxes.push_back(random_box(rng, 3.0, 3));
    const auto idx = nms_indices(boxes, 0.1);
    EXPECT_EQ(idx, nms_reference(boxes, 0.1));
    const auto kept = nms(boxes, 0.1);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      EXPECT_EQ(kept[i], boxes[idx[i]]);
      for (std::size_t j = i + 1; j < kept.size(); ++j) EXPECT_LE(iou_3d(kept[i], kept[j]), 0.1);
    }
  }
}

TEST(PredictBox, Arithmetic) {
  const Box3D b = make_box(1, 1, 0, 1, 2, 1, 0.4);
  EXPECT_EQ(predict_box(b, {3, 4}, 0.0), b);
  const Box3D p = predict_box(b, {2, -1}, 0.5);
  EXPECT_DOUBLE_EQ(p.center[0], 2.0);
  EXPECT_DOUBLE_EQ(p.center[1], 0.5);
  EXPECT_DOUBLE_EQ(p.center[2], 0.0);
  EXPECT_EQ(p.size, b.size);
  EXPECT_EQ(p.yaw, b.yaw);
}

TEST(PredictBox, ForwardThenBackwardRoundTrips) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    const Box3D b = random_box(rng);
    const std::array<double, 2> v{b.velocity[0], b.velocity[1]};
    const Box3D back = predict_box(predict_box(b, v, 0.7), {-v[0], -v[1]}, 0.7);
    EXPECT_NEAR(back.center[0], b.center[0], 1e-9);
    EXPECT_NEAR(back.center[1], b.center[1], 1e-9);
  }
}
