#include <benchmark/benchmark.h>

#include <random>

#include "motformer/config.hpp"
#include "motformer/matching.hpp"
#include "motformer/pipeline.hpp"

using namespace motformer;

namespace {

RunConfig preset() {
  RunConfig cfg = default_run_config();
  resolve(cfg);
  return cfg;
}

const std::vector<TrainingScene>& scenes() {
  static const std::vector<TrainingScene> s = [] {
    RunConfig cfg = preset();
    return generate_split(cfg, "eval", 4);
  }();
  return s;
}

}  // namespace

static void BM_Iou3d(benchmark::State& state) {
  const auto& frame = scenes()[0].detections[0];
  double sink = 0.0;
  for (auto _ : state)
    for (std::size_t i = 1; i < frame.size(); ++i) sink += iou_3d(frame[0], frame[i]);
  benchmark::DoNotOptimize(sink);
  state.SetItemsProcessed(state.iterations() * static_cast<long>(frame.size() - 1));
}
BENCHMARK(BM_Iou3d);

static void BM_Nms(benchmark::State& state) {
  const auto& frame = scenes()[0].detections[5];
  for (auto _ : state) benchmark::DoNotOptimize(nms(frame, 0.1));
}
BENCHMARK(BM_Nms);

static void BM_Hungarian(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ad::Matrix cost(n, n);
  for (ad::Index i = 0; i < cost.size(); ++i) cost.data()[i] = u(rng);
  const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> forbid =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
  for (auto _ : state) benchmark::DoNotOptimize(hungarian(cost, forbid));
}
BENCHMARK(BM_Hungarian)->Arg(8)->Arg(32)->Arg(128);

static void BM_GreedyMatch(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AffinityTable t;
  t.num_tracks = n;
  for (int d = 0; d < n; ++d) {
    t.detection_scores.push_back(u(rng));
    for (int k = 0; k < n; ++k)
      if (u(rng) < 0.2) t.entries.push_back({k, d, u(rng)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(greedy_match(t, 0.5));
}
BENCHMARK(BM_GreedyMatch)->Arg(32)->Arg(128);

// One 20-frame scene through the learned tracker at the preset model size.
static void BM_TrackScene(benchmark::State& state) {
  const RunConfig cfg = preset();
  Model model = make_model(cfg);
  const std::vector<TrainingScene> one{scenes()[0]};
  for (auto _ : state) benchmark::DoNotOptimize(track_scenes(model, cfg.tracker, one));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(one[0].detections.size()));
}
BENCHMARK(BM_TrackScene)->Unit(benchmark::kMillisecond);

static void BM_BaselineScene(benchmark::State& state) {
  const RunConfig cfg = preset();
  const std::vector<TrainingScene> one{scenes()[0]};
  for (auto _ : state) benchmark::DoNotOptimize(track_scenes_baseline(baseline_config(cfg), one));
}
BENCHMARK(BM_BaselineScene)->Unit(benchmark::kMicrosecond);

// Forward and BPTT backward over one clip of T frames.
static void BM_TrainClip(benchmark::State& state) {
  RunConfig cfg = preset();
  cfg.train.clip_length = static_cast<int>(state.range(0));
  Model model = make_model(cfg);
  const auto frames = prepare_scene(scenes()[1], cfg.tracker.nms_iou, cfg.train.label_min_iou);
  const std::span<const PreparedFrame> clip(frames.data(), cfg.train.clip_length);
  auto buffer = ad::make_gradient_buffer(model.params());
  for (auto _ : state)
    benchmark::DoNotOptimize(train_clip(model, cfg.tracker, cfg.train, clip, 5, &buffer).loss);
}
BENCHMARK(BM_TrainClip)->Arg(2)->Arg(6)->Unit(benchmark::kMillisecond);

static void BM_Amota(benchmark::State& state) {
  const RunConfig cfg = preset();
  const auto outputs = track_scenes_baseline(baseline_config(cfg), scenes());
  std::vector<EvalSequence> seqs;
  for (std::size_t i = 0; i < scenes().size(); ++i)
    seqs.push_back({outputs[i], scenes()[i].ground_truth.frames});
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(seqs, cfg.eval).amota);
}
BENCHMARK(BM_Amota)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
