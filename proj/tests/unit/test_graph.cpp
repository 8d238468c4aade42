#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "motformer/graph.hpp"
#include "test_util.hpp"

using namespace motformer;
using motformer::testing::make_box;
using motformer::testing::random_box;

namespace {

std::set<std::pair<int, int>> edge_set(const SparseGraph& g) {
  std::set<std::pair<int, int>> s;
  for (const Edge& e : g.edges) s.insert({e.src, e.dst});
  return s;
}

std::set<std::pair<int, int>> radius_oracle(const std::vector<std::array<double, 2>>& pts, double r) {
  std::set<std::pair<int, int>> s;
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = 0; b < pts.size(); ++b) {
      const double dx = pts[a][0] - pts[b][0], dy = pts[a][1] - pts[b][1];
      if (a == b || dx * dx + dy * dy <= r * r) s.insert({static_cast<int>(a), static_cast<int>(b)});
    }
  return s;
}

Track random_track(std::mt19937_64& rng, int id, int frame, int num_classes) {
  Track t;
  t.id = id;
  t.box = random_box(rng, 10.0, num_classes);
  t.class_id = t.box.class_id;
  std::uniform_real_distribution<double> v(-4, 4);
  t.velocity_est = {v(rng), v(rng)};
  std::uniform_int_distribution<int> gap(1, 3);
  t.last_update_frame = frame - gap(rng);
  t.score = t.box.score;
  return t;
}

struct RefEdge {
  int src, dst;
  AssociationEdgeFeature f;
};

std::vector<RefEdge> association_oracle(const std::vector<Track>& tracks, const std::vector<Box3D>& dets,
                                        const std::vector<double>& radii, double mult, bool full,
                                        int frame, double period) {
  std::vector<RefEdge> out;
  for (std::size_t i = 0; i < dets.size(); ++i)
    for (std::size_t j = 0; j < tracks.size(); ++j) {
      const Track& t = tracks[j];
      const Box3D& d = dets[i];
      if (t.class_id != d.class_id) continue;
      const double gap = frame - t.last_update_frame;
      const double px = t.box.center[0] + t.velocity_est[0] * gap * period;
      const double py = t.box.center[1] + t.velocity_est[1] * gap * period;
      const double dist = std::hypot(d.center[0] - px, d.center[1] - py);
      if (!full && dist > radii[d.class_id] * mult) continue;
      AssociationEdgeFeature f{};
      for (int k = 0; k < 3; ++k) {
        f[k] = d.center[k] - t.box.center[k];
        f[3 + k] = d.size[k] - t.box.size[k];
      }
      double dyaw = std::fmod(d.yaw - t.box.yaw, 2 * kPi);
      if (dyaw > kPi) dyaw -= 2 * kPi;
      if (dyaw <= -kPi) dyaw += 2 * kPi;
      f[6] = dyaw;
      f[7] = gap;
      f[8] = dist;
      out.push_back({static_cast<int>(j), static_cast<int>(i), f});
    }
  return out;
}

GraphBuildConfig three_class_config() {
  GraphBuildConfig c;
  c.neighbor_radius = 10.0;
  c.class_radii = {8.0, 4.0, 6.0};
  return c;
}

}  // namespace

TEST(DetectionGraph, SingleDetectionHasSelfLoop) {
  const std::vector<Box3D> d{make_box(0, 0, 0, 1, 1, 1)};
  const SparseGraph g = build_detection_graph(d, three_class_config());
  EXPECT_EQ(g.num_src, 1);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0], (Edge{0, 0}));
}

TEST(DetectionGraph, TwoWithinRadiusBothDirections) {
  const std::vector<Box3D> d{make_box(0, 0, 0, 1, 1, 1), make_box(5, 0, 0, 1, 1, 1)};
  const auto s = edge_set(build_detection_graph(d, three_class_config()));
  EXPECT_EQ(s, (std::set<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
}

TEST(DetectionGraph, MatchesQuadraticOracleAndIsSymmetric) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    std::vector<Box3D> d;
    std::vector<std::array<double, 2>> pts;
    for (int i = 0; i < 20; ++i) {
      d.push_back(random_box(rng, 15.0));
      pts.push_back({d.back().center[0], d.back().center[1]});
    }
    const SparseGraph g = build_detection_graph(d, three_class_config());
    const auto s = edge_set(g);
    EXPECT_EQ(s.size(), g.edges.size());
    EXPECT_EQ(s, radius_oracle(pts, 10.0));
    for (const auto& [a, b] : s) EXPECT_TRUE(s.count({b, a}));
  }
}

TEST(TrackGraph, EmptyAndFarApart) {
  const GraphBuildConfig cfg = three_class_config();
  EXPECT_TRUE(build_track_graph({}, cfg, 3, 0.5).edges.empty());
  std::vector<Track> t(2);
  t[0].box = make_box(0, 0, 0, 1, 1, 1);
  t[1].box = make_box(50, 0, 0, 1, 1, 1);
  t[0].last_update_frame = t[1].last_update_frame = 2;
  EXPECT_EQ(edge_set(build_track_graph(t, cfg, 3, 0.5)),
            (std::set<std::pair<int, int>>{{0, 0}, {1, 1}}));
}

TEST(TrackGraph, UsesPredictedCenters) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Track> tracks;
    std::vector<std::array<double, 2>> pts;
    for (int j = 0; j < 15; ++j) {
      tracks.push_back(random_track(rng, j, 10, 3));
      const Track& t = tracks.back();
      const double gap = 10 - t.last_update_frame;
      pts.push_back({t.box.center[0] + t.velocity_est[0] * gap * 0.5,
                     t.box.center[1] + t.velocity_est[1] * gap * 0.5});
    }
    EXPECT_EQ(edge_set(build_track_graph(tracks, three_class_config(), 10, 0.5)),
              radius_oracle(pts, 10.0));
  }
}

TEST(AssociationGraph, IdenticalPredictedPositionGivesZeroFeatures) {
  Track t;
  t.box = make_box(3, 4, 0.5, 2, 4, 1.5, 0.3);
  t.class_id = 0;
  t.last_update_frame = 4;
  const std::vector<Track> tracks{t};
  const std::vector<Box3D> dets{make_box(3, 4, 0.5, 2, 4, 1.5, 0.3)};
  const SparseGraph g = build_association_graph(tracks, dets, three_class_config(), 5, 0.5);
  ASSERT_EQ(g.edges.size(), 1u);
  const AssociationEdgeFeature expected{0, 0, 0, 0, 0, 0, 0, 1, 0};
  EXPECT_EQ(g.features[0], expected);

  const std::vector<Box3D> other{make_box(3, 4, 0.5, 2, 4, 1.5, 0.3, 1)};
  EXPECT_TRUE(build_association_graph(tracks, other, three_class_config(), 5, 0.5).edges.empty());
}

TEST(AssociationGraph, MatchesBruteForceBuilder) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Track> tracks;
    std::vector<Box3D> dets;
    for (int j = 0; j < 10; ++j) tracks.push_back(random_track(rng, j, 7, 3));
    for (int i = 0; i < 12; ++i) dets.push_back(random_box(rng, 10.0, 3));
    for (bool full : {false, true}) {
      GraphBuildConfig cfg = three_class_config();
      cfg.fully_connected_assoc = full;
      cfg.radius_multiplier = 1.5;
      const SparseGraph g = build_association_graph(tracks, dets, cfg, 7, 0.5);
      const auto ref = association_oracle(tracks, dets, cfg.class_radii, 1.5, full, 7, 0.5);
      ASSERT_EQ(g.edges.size(), ref.size());
      ASSERT_EQ(g.features.size(), ref.size());
      for (std::size_t e = 0; e < ref.size(); ++e) {
        EXPECT_EQ(g.edges[e].src, ref[e].src);
        EXPECT_EQ(g.edges[e].dst, ref[e].dst);
        for (int k = 0; k < kEdgeFeatureDim; ++k) EXPECT_NEAR(g.features[e][k], ref[e].f[k], 1e-9);
      }
      for (const Edge& e : g.edges) {
        EXPECT_LT(e.src, g.num_src);
        EXPECT_LT(e.dst, g.num_dst);
        EXPECT_EQ(tracks[e.src].class_id, dets[e.dst].class_id);
      }
      for (const auto& f : g.features) {
        EXPECT_GE(f[7], 1.0);
        EXPECT_GE(f[8], 0.0);
      }
    }
  }
}

TEST(AssociationGraph, RadiusMultiplierMonotone) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Track> tracks;
    std::vector<Box3D> dets;
    for (int j = 0; j < 8; ++j) tracks.push_back(random_track(rng, j, 5, 3));
    for (int i = 0; i < 8; ++i) dets.push_back(random_box(rng, 10.0, 3));
    std::set<std::pair<int, int>> prev;
    for (double m : {0.25, 0.5, 1.0, 2.0, 4.0}) {
      GraphBuildConfig cfg = three_class_config();
      cfg.radius_multiplier = m;
      const auto cur = edge_set(build_association_graph(tracks, dets, cfg, 5, 0.5));
      EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
      prev = cur;
    }
  }
}

TEST(AssociationGraph, TranslationInvariantFeatures) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> off(-100, 100);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Track> tracks;
    std::vector<Box3D> dets;
    for (int j = 0; j < 8; ++j) tracks.push_back(random_track(rng, j, 5, 3));
    for (int i = 0; i < 8; ++i) dets.push_back(random_box(rng, 10.0, 3));
    const double tx = off(rng), ty = off(rng);
    auto moved_tracks = tracks;
    auto moved_dets = dets;
    for (Track& t : moved_tracks) {
      t.box.center[0] += tx;
      t.box.center[1] += ty;
    }
    for (Box3D& d : moved_dets) {
      d.center[0] += tx;
      d.center[1] += ty;
    }
    const GraphBuildConfig cfg = three_class_config();
    const SparseGraph a = build_association_graph(tracks, dets, cfg, 5, 0.5);
    const SparseGraph b = build_association_graph(moved_tracks, moved_dets, cfg, 5, 0.5);
    ASSERT_EQ(a.edges, b.edges);
    for (std::size_t e = 0; e < a.features.size(); ++e)
      for (int k = 0; k < kEdgeFeatureDim; ++k) EXPECT_NEAR(a.features[e][k], b.features[e][k], 1e-9);
  }
}

TEST(DetectionFeatures, LayoutAndOneHot) {
  std::vector<Box3D> d{make_box(11, 12, 0.7, 1, 2, 3, 0.4, 2, 0.8)};
  d[0].velocity = {1.5, -0.5};
  const ad::Matrix x = detection_features(d, 3, {10.0, 10.0});
  ASSERT_EQ(x.cols(), detection_feature_dim(3));
  ASSERT_EQ(x.cols(), 13);
  const std::vector<double> expected{1, 2, 0.7, 1, 2, 3, 0.4, 1.5, -0.5, 0, 0, 1, 0.8};
  for (int k = 0; k < 13; ++k) EXPECT_DOUBLE_EQ(x(0, k), expected[k]);
  std::mt19937_64 rng(1);
  std::vector<Box3D> many;
  for (int i = 0; i < 20; ++i) many.push_back(random_box(rng, 5.0, 4));
  const ad::Matrix y = detection_features(many, 4, {0, 0});
  for (int i = 0; i < 20; ++i) EXPECT_DOUBLE_EQ(y.row(i).segment(9, 4).sum(), 1.0);
}

TEST(DefaultClassRadii, SpeedTimesHorizonPlusMargin) {
  const SceneConfig s = default_scene_config();
  const auto r = default_class_radii(s.classes, 0.5, 3);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_DOUBLE_EQ(r[0], 10.0 * 0.5 * 3 + 1.0);
  EXPECT_DOUBLE_EQ(r[1], 2.0 * 0.5 * 3 + 1.0);
  EXPECT_DOUBLE_EQ(r[2], 8.0 * 0.5 * 3 + 1.0);
}

TEST(GraphBuildConfig, RejectsNonPositiveRadii) {
  GraphBuildConfig c = three_class_config();
  EXPECT_NO_THROW(validate(c));
  c.class_radii[1] = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = three_class_config();
  c.radius_multiplier = -1;
  EXPECT_THROW(validate(c), ConfigError);
}
