#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../common/metric_oracle.hpp"
#include "motformer/baselines.hpp"
#include "motformer/graph.hpp"
#include "motformer/metrics.hpp"
#include "motformer/simulator.hpp"

using namespace motformer;
using motformer::testing::hand_scenario;
using motformer::testing::labeled;

namespace {

std::vector<EvalSequence> baseline_run(int scenes, std::uint64_t seed) {
  std::vector<EvalSequence> out;
  for (int s = 0; s < scenes; ++s) {
    const SceneConfig sc = default_scene_config(seed + 2 * s);
    const GroundTruthScene gt = generate_scene(sc);
    const DetectionFrames det = corrupt(gt, sc.classes, default_noise_config(seed + 2 * s + 1));
    BaselineConfig bc;
    bc.graph.class_radii = default_class_radii(sc.classes, 0.5, 3);
    out.push_back({cv_greedy_track(det, bc), gt.frames});
  }
  return out;
}

EvalSequence perfect_of(const std::vector<std::vector<LabeledBox>>& gt) {
  EvalSequence s;
  s.ground_truth = gt;
  s.predictions = gt;
  return s;
}

}  // namespace

TEST(MatchFrame, HandScenarioCounts) {
  const std::vector<EvalSequence> seqs{hand_scenario()};
  const SweepResult r = evaluate_class(seqs, 0, 2.0, -INFINITY);
  EXPECT_EQ(r.counts.tp, 5);
  EXPECT_EQ(r.counts.fn, 1);
  EXPECT_EQ(r.counts.fp, 1);
  EXPECT_EQ(r.counts.ids, 1);
  EXPECT_EQ(r.counts.frag, 1);
  EXPECT_DOUBLE_EQ(mota(r.counts, 6), 0.5);
  EXPECT_NEAR(r.counts.distance_sum, 0.1 + 0.2 + 0.1 + 0.3 + 0.1, 1e-12);
  EXPECT_EQ(r.trajectories, 2);
  EXPECT_EQ(r.mostly_tracked, 1);   // object 1: 3/3; object 2: 2/3
}

TEST(MatchFrame, PerfectAndEmpty) {
  const SceneConfig sc = default_scene_config(1);
  const GroundTruthScene gt = generate_scene(sc);
  long boxes = 0;
  for (const auto& f : gt.frames) boxes += static_cast<long>(f.size());
  FrameEvalCounts total, none;
  MatchMemory m1, m2;
  for (const auto& f : gt.frames) {
    total += match_frame(f, f, 2.0, m1).counts;
    none += match_frame({}, f, 2.0, m2).counts;
  }
  EXPECT_EQ(total.tp, boxes);
  EXPECT_EQ(total.fp + total.fn + total.ids + total.frag, 0);
  EXPECT_EQ(none.fn, boxes);
  EXPECT_DOUBLE_EQ(mota(total, boxes), 1.0);
  EXPECT_DOUBLE_EQ(mota(none, boxes), 0.0);
}

TEST(MatchFrame, KeepsPreviousCorrespondenceOverCloserCandidate) {
  MatchMemory mem;
  match_frame({labeled(7, 0, 0)}, {labeled(1, 0, 0)}, 2.0, mem);
  // Track 8 is closer now but track 7 is still within range.
  const FrameMatch m = match_frame({labeled(7, 1.5, 0), labeled(8, 0.1, 0)}, {labeled(1, 0, 0)}, 2.0, mem);
  ASSERT_EQ(m.pairs.size(), 1u);
  EXPECT_EQ(m.pairs[0].second, 0);
  EXPECT_EQ(m.counts.ids, 0);
}

TEST(Mota, ScalarHandTallies) {
  FrameEvalCounts c;
  c.tp = 8;
  c.fp = 3;
  c.fn = 2;
  c.ids = 1;
  EXPECT_DOUBLE_EQ(mota(c, 10), 1.0 - 6.0 / 10.0);
  // r = 0.8, P = 10: 1 - (1 + 3 + 2 - 2) / 8
  EXPECT_DOUBLE_EQ(motar(c, 0.8, 10), 0.5);
  c.fp = 50;
  EXPECT_DOUBLE_EQ(motar(c, 0.8, 10), 0.0);
}

TEST(Amota, PerfectTrackerIsOne) {
  std::vector<EvalSequence> seqs;
  for (int s = 0; s < 3; ++s) seqs.push_back(perfect_of(generate_scene(default_scene_config(s)).frames));
  const MetricsReport r = evaluate(seqs, EvalConfig{});
  EXPECT_DOUBLE_EQ(r.amota, 1.0);
  EXPECT_DOUBLE_EQ(r.amotp, 0.0);
  EXPECT_EQ(r.ids, 0);
  for (const ClassMetrics& c : r.per_class) {
    EXPECT_EQ(c.mostly_lost, 0);
    EXPECT_EQ(c.mostly_tracked, c.trajectories);
  }
}

TEST(Amota, HalfUndetectedCapsRecall) {
  EvalSequence s;
  for (int f = 0; f < 5; ++f) {
    s.ground_truth.push_back({labeled(1, f, 0), labeled(2, f, 20)});
    s.predictions.push_back({labeled(1, f, 0)});
  }
  const EvalConfig cfg;
  const ClassMetrics m = amota_amotp({s}, 0, cfg);
  // Targets k/39 <= 0.5 are reached with MOTAR 1: k = 1..19.
  EXPECT_NEAR(m.amota, 19.0 / 39.0, 1e-12);
  for (const CurvePoint& p : m.curve) EXPECT_EQ(p.achieved, p.recall <= 0.5 + 1e-12);
  EXPECT_DOUBLE_EQ(m.amotp, 0.0);
}

TEST(Amota, NoPredictionsFallsBackToMatchDistance) {
  EvalSequence s;
  s.ground_truth = {{labeled(1, 0, 0)}};
  s.predictions = {{}};
  const ClassMetrics m = amota_amotp({s}, 0, EvalConfig{});
  EXPECT_EQ(m.amota, 0.0);
  EXPECT_EQ(m.amotp, 2.0);
}

TEST(Amota, EqualsSlowReimplementation) {
  const auto seqs = baseline_run(6, 77);
  const EvalConfig cfg;
  for (int c = 0; c < 3; ++c) {
    const ClassMetrics fast = amota_amotp(seqs, c, cfg);
    const auto slow = motformer::testing::slow_amota(seqs, c, cfg.match_distance, cfg.recall_samples);
    EXPECT_NEAR(fast.amota, slow.amota, 1e-12) << "class " << c;
    EXPECT_NEAR(fast.amotp, slow.amotp, 1e-12) << "class " << c;
    for (double thr : {-HUGE_VAL, 0.3, 0.6, 0.8}) {
      const SweepResult a = evaluate_class(seqs, c, 2.0, thr);
      const auto b = motformer::testing::slow_clear(seqs, c, 2.0, thr);
      EXPECT_EQ(a.counts.tp, b.tp);
      EXPECT_EQ(a.counts.fp, b.fp);
      EXPECT_EQ(a.counts.fn, b.fn);
      EXPECT_EQ(a.counts.ids, b.ids);
      EXPECT_EQ(a.counts.frag, b.frag);
    }
  }
}

TEST(Amota, InvariantUnderMonotoneScoreTransforms) {
  const auto seqs = baseline_run(4, 99);
  const MetricsReport ref = evaluate(seqs, EvalConfig{});
  for (auto fn : {+[](double s) { return s * s * s; }, +[](double s) { return std::exp(3 * s) - 5; },
                  +[](double s) { return 0.5 * s + 0.1; }}) {
    auto moved = seqs;
    for (auto& seq : moved)
      for (auto& frame : seq.predictions)
        for (auto& b : frame) b.box.score = fn(b.box.score);
    const MetricsReport r = evaluate(moved, EvalConfig{});
    EXPECT_DOUBLE_EQ(r.amota, ref.amota);
    EXPECT_DOUBLE_EQ(r.amotp, ref.amotp);
    EXPECT_EQ(r.ids, ref.ids);
  }
}

TEST(Amota, AddingFalsePositiveNeverHelps) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  const auto seqs = baseline_run(3, 55);
  const EvalConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    auto more = seqs;
    std::uniform_int_distribution<std::size_t> sq(0, more.size() - 1);
    auto& seq = more[sq(rng)];
    std::uniform_int_distribution<std::size_t> fr(0, seq.predictions.size() - 1);
    seq.predictions[fr(rng)].push_back(labeled(99999 + trial, 500, 500, score(rng), trial % 3));
    for (int c = 0; c < 3; ++c) {
      EXPECT_LE(amota_amotp(more, c, cfg).amota, amota_amotp(seqs, c, cfg).amota + 1e-15);
      for (double thr : {-HUGE_VAL, 0.5}) {
        const SweepResult a = evaluate_class(seqs, c, 2.0, thr), b = evaluate_class(more, c, 2.0, thr);
        EXPECT_LE(mota(b.counts, b.counts.gt()), mota(a.counts, a.counts.gt()));
      }
    }
  }
}

TEST(Amota, BoundsAndRecallTargets) {
  const auto t = recall_targets(40);
  ASSERT_EQ(t.size(), 39u);
  EXPECT_DOUBLE_EQ(t.front(), 1.0 / 39.0);
  EXPECT_DOUBLE_EQ(t.back(), 1.0);
  const MetricsReport r = evaluate(baseline_run(3, 11), EvalConfig{});
  EXPECT_GE(r.amota, 0.0);
  EXPECT_LE(r.amota, 1.0);
  EXPECT_GE(r.amotp, 0.0);
  EXPECT_EQ(r.per_class.size(), 3u);
}

TEST(EvalConfig, Validation) {
  EvalConfig c;
  c.match_distance = 0;
  EXPECT_THROW(evaluate({}, c), ConfigError);
  c = EvalConfig{};
  c.recall_samples = 1;
  EXPECT_THROW(evaluate({}, c), ConfigError);
}
