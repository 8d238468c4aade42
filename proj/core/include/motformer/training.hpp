#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "motformer/autodiff.hpp"
#include "motformer/model.hpp"
#include "motformer/simulator.hpp"
#include "motformer/tracker.hpp"

namespace motformer {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int clip_length = 6;          // T
  int batch_size = 8;
  int epochs = 12;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double focal_alpha = 0.5;
  double focal_gamma = 1.0;
  double lambda_v = 1.0;
  double smooth_l1_beta = 1.0;
  double label_min_iou = 0.01;
  bool augmentation = false;    // detection dropout + box jitter
  double augment_drop_prob = 0.1;
  double augment_jitter = 0.1;  // meters
  int threads = 1;              // clips of a batch run concurrently
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct FrameLossRecord {
  double affinity = 0.0;
  double velocity = 0.0;
  double total = 0.0;
  int positives = 0;
  int negatives = 0;
  int velocity_count = 0;   // supervised detections
};

/// Mean focal loss over the rows of an E x 1 logit column.
ad::Tensor focal_loss(const ad::Tensor& logits, std::span<const double> targets, double alpha,
                      double gamma);

/// Mean smooth-L1 over the (vx, vy) components of rows with mask set.
/// Returns an invalid tensor when no row is supervised.
ad::Tensor velocity_loss(const ad::Tensor& pred, const ad::Matrix& target,
                         const std::vector<bool>& mask, double beta);

// One scene after NMS and label assignment.
struct PreparedFrame {
  std::vector<Box3D> detections;
  std::vector<int> identities;       // gt id per detection, -1 for false positives
  ad::Matrix velocity_targets;       // N x 2
  std::vector<bool> supervised;
};

struct TrainingScene {
  DetectionFrames detections;
  GroundTruthScene ground_truth;
};

PreparedFrame prepare_frame(std::span<const Box3D> detections,
                            std::span<const LabeledBox> ground_truth, double nms_iou,
                            double min_iou);

std::vector<PreparedFrame> prepare_scene(const TrainingScene& scene, double nms_iou,
                                         double min_iou);

/// Edge targets: 1 iff the detection's identity equals the track's.
std::vector<double> edge_targets(const SparseGraph& assoc, std::span<const Track> tracks,
                                 std::span<const int> identities);

struct ClipResult {
  double loss = 0.0;                      // L_seq
  std::vector<FrameLossRecord> frames;    // frames 2..T
  bool skipped = false;                   // nothing supervised
};

/// Autoregressive forward over the clip with one shared tape, then a single
/// backward of the summed frame losses. Gradients go into `buffer` when
/// given, else into the parameters' grad fields. `dropout_seed` selects the
/// dropout masks; pass std::nullopt to disable dropout.
ClipResult train_clip(Model& model, const TrackerConfig& tracker_cfg, const TrainConfig& cfg,
                      std::span<const PreparedFrame> frames,
                      std::optional<std::uint64_t> dropout_seed, ad::GradientBuffer* buffer);

/// Forward only: L_seq as a tensor on `tape` plus the per-frame records.
ad::Tensor clip_loss(ad::Tape& tape, Model& model, const TrackerConfig& tracker_cfg,
                     const TrainConfig& cfg, std::span<const PreparedFrame> frames,
                     std::vector<FrameLossRecord>* records);

struct ClipRef {
  int scene = 0;
  int start = 0;
};

/// All stride-1 windows of `length` frames.
std::vector<ClipRef> enumerate_clips(std::span<const TrainingScene> scenes, int length);

struct TrainLogRow {
  int epoch = 0;
  int batch = 0;
  double l_seq = 0.0;   // mean over the batch's clips
  double l_a = 0.0;
  double l_v = 0.0;
};

struct FitState {
  ad::AdamWState optimizer;
  int next_epoch = 0;
};

struct FitCallbacks {
  std::function<void(const TrainLogRow&)> on_batch;
  std::function<void(int epoch, const FitState&)> on_epoch_end;
};

/// Runs epochs [state.next_epoch, cfg.epochs) over shuffled clips. Each batch
/// sums per-clip gradients in clip order and takes one AdamW step.
std::vector<TrainLogRow> fit(Model& model, std::span<const TrainingScene> scenes,
                             const TrackerConfig& tracker_cfg, const TrainConfig& cfg,
                             FitState& state, const FitCallbacks& callbacks = {});

}  // namespace motformer
