#include "motformer/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <thread>

#include "motformer/matching.hpp"

namespace motformer {

using ad::Tensor;

void validate(const TrainConfig& cfg) {
  if (cfg.clip_length < 2) throw ConfigError("train.clip_length must be >= 2");
  if (cfg.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (cfg.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (!(cfg.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (!(cfg.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(cfg.focal_alpha >= 0.0 && cfg.focal_alpha <= 1.0))
    throw ConfigError("train.focal_alpha must be in [0, 1]");
  if (!(cfg.focal_gamma >= 0.0)) throw ConfigError("train.focal_gamma must be >= 0");
  if (!(cfg.lambda_v >= 0.0)) throw ConfigError("train.lambda_v must be >= 0");
  if (!(cfg.smooth_l1_beta > 0.0)) throw ConfigError("train.smooth_l1_beta must be > 0");
  if (!(cfg.label_min_iou > 0.0 && cfg.label_min_iou < 1.0))
    throw ConfigError("train.label_min_iou must be in (0, 1)");
  if (!(cfg.augment_drop_prob >= 0.0 && cfg.augment_drop_prob <= 1.0))
    throw ConfigError("train.augment_drop_prob must be in [0, 1]");
  if (!(cfg.augment_jitter >= 0.0)) throw ConfigError("train.augment_jitter must be >= 0");
  if (cfg.threads < 1) throw ConfigError("train.threads must be >= 1");
}

Tensor focal_loss(const Tensor& logits, std::span<const double> targets, double alpha,
                  double gamma) {
  ad::Tape& tape = *logits.tape();
  const auto e = static_cast<ad::Index>(targets.size());
  if (logits.rows() != e || logits.cols() != 1)
    throw ad::AutodiffError("focal_loss: logits must be E x 1 with E = " + std::to_string(e));
  if (e == 0) throw ad::AutodiffError("focal_loss: empty edge set");
  ad::Matrix sign(e, 1), alpha_t(e, 1);
  for (ad::Index i = 0; i < e; ++i) {
    const bool pos = targets[i] > 0.5;
    sign(i, 0) = pos ? 1.0 : -1.0;
    alpha_t(i, 0) = pos ? alpha : 1.0 - alpha;
  }
  // z = logit * (2t - 1), so p_t = sigmoid(z) and 1 - p_t = sigmoid(-z).
  Tensor z = ad::mul(logits, tape.constant(std::move(sign)));
  Tensor log_pt = ad::log_sigmoid(z);
  Tensor terms = ad::mul(log_pt, tape.constant(std::move(alpha_t)));
  if (gamma != 0.0) {
    Tensor modulator = ad::exp(ad::scale(ad::log_sigmoid(ad::scale(z, -1.0)), gamma));
    terms = ad::mul(terms, modulator);
  }
  return ad::scale(ad::mean(terms), -1.0);
}

Tensor velocity_loss(const Tensor& pred, const ad::Matrix& target, const std::vector<bool>& mask,
                     double beta) {
  std::vector<int> rows;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) rows.push_back(static_cast<int>(i));
  if (rows.empty()) return Tensor();
  ad::Matrix t(static_cast<ad::Index>(rows.size()), 2);
  for (std::size_t k = 0; k < rows.size(); ++k) t.row(static_cast<ad::Index>(k)) = target.row(rows[k]);
  Tensor diff = ad::sub(ad::row_gather(pred, rows), pred.tape()->constant(std::move(t)));
  return ad::mean(ad::smooth_l1(diff, beta));
}

PreparedFrame prepare_frame(std::span<const Box3D> detections,
                            std::span<const LabeledBox> ground_truth, double nms_iou,
                            double min_iou) {
  PreparedFrame f;
  f.detections = nms(detections, nms_iou);
  const auto n = static_cast<ad::Index>(f.detections.size());
  f.identities.assign(f.detections.size(), -1);
  f.supervised.assign(f.detections.size(), false);
  f.velocity_targets = ad::Matrix::Zero(n, 2);
  const auto idx = assign_label_indices(f.detections, ground_truth, min_iou);
  for (ad::Index i = 0; i < n; ++i) {
    if (idx[i] < 0) continue;
    const LabeledBox& g = ground_truth[idx[i]];
    f.identities[i] = g.id;
    f.supervised[i] = true;
    f.velocity_targets(i, 0) = g.box.velocity[0];
    f.velocity_targets(i, 1) = g.box.velocity[1];
  }
  return f;
}

std::vector<PreparedFrame> prepare_scene(const TrainingScene& scene, double nms_iou,
                                         double min_iou) {
  if (scene.detections.size() != scene.ground_truth.frames.size())
    throw TrainingError("scene has " + std::to_string(scene.detections.size()) +
                        " detection frames but " +
                        std::to_string(scene.ground_truth.frames.size()) + " ground-truth frames");
  std::vector<PreparedFrame> out;
  out.reserve(scene.detections.size());
  for (std::size_t t = 0; t < scene.detections.size(); ++t)
    out.push_back(prepare_frame(scene.detections[t], scene.ground_truth.frames[t], nms_iou, min_iou));
  return out;
}

std::vector<double> edge_targets(const SparseGraph& assoc, std::span<const Track> tracks,
                                 std::span<const int> identities) {
  std::vector<double> out(assoc.edges.size(), 0.0);
  for (std::size_t e = 0; e < assoc.edges.size(); ++e) {
    const int id = identities[assoc.edges[e].dst];
    out[e] = (id >= 0 && tracks[assoc.edges[e].src].identity == id) ? 1.0 : 0.0;
  }
  return out;
}

Tensor clip_loss(ad::Tape& tape, Model& model, const TrackerConfig& tracker_cfg,
                 const TrainConfig& cfg, std::span<const PreparedFrame> frames,
                 std::vector<FrameLossRecord>* records) {
  Tracker tracker(model, tracker_cfg);
  TrackerState state;
  std::vector<Tensor> frame_losses;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const PreparedFrame& f = frames[t];
    StepResult r =
        tracker.step_preprocessed(tape, state, f.detections, static_cast<int>(t), f.identities);
    if (t == 0) continue;
    FrameLossRecord rec;
    Tensor total;
    if (!r.assoc_graph.edges.empty()) {
      const auto targets = edge_targets(r.assoc_graph, r.tracks, f.identities);
      for (double y : targets) (y > 0.5 ? rec.positives : rec.negatives) += 1;
      Tensor la = focal_loss(r.affinity_logits, targets, cfg.focal_alpha, cfg.focal_gamma);
      rec.affinity = la.item();
      total = la;
    }
    if (!f.detections.empty()) {
      Tensor lv = velocity_loss(r.velocities, f.velocity_targets, f.supervised, cfg.smooth_l1_beta);
      if (lv.valid()) {
        rec.velocity = lv.item();
        rec.velocity_count = static_cast<int>(std::count(f.supervised.begin(), f.supervised.end(), true));
        Tensor weighted = ad::scale(lv, cfg.lambda_v);
        total = total.valid() ? ad::add(total, weighted) : weighted;
      }
    }
    if (total.valid()) {
      rec.total = total.item();
      frame_losses.push_back(total);
    }
    if (records != nullptr) records->push_back(rec);
  }
  if (frame_losses.empty()) return Tensor();
  Tensor sum = frame_losses[0];
  for (std::size_t i = 1; i < frame_losses.size(); ++i) sum = ad::add(sum, frame_losses[i]);
  return sum;
}

ClipResult train_clip(Model& model, const TrackerConfig& tracker_cfg, const TrainConfig& cfg,
                      std::span<const PreparedFrame> frames,
                      std::optional<std::uint64_t> dropout_seed, ad::GradientBuffer* buffer) {
  ad::Tape tape;
  tape.set_dropout(dropout_seed.has_value(), dropout_seed.value_or(0));
  ClipResult result;
  Tensor loss = clip_loss(tape, model, tracker_cfg, cfg, frames, &result.frames);
  if (!loss.valid()) {
    result.skipped = true;
    return result;
  }
  result.loss = loss.item();
  if (!loss.requires_grad()) return result;
  if (buffer != nullptr) {
    tape.backward(loss, *buffer);
  } else {
    tape.backward(loss);
  }
  return result;
}

std::vector<ClipRef> enumerate_clips(std::span<const TrainingScene> scenes, int length) {
  std::vector<ClipRef> out;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const int n = static_cast<int>(scenes[s].detections.size());
    for (int start = 0; start + length <= n; ++start) out.push_back({static_cast<int>(s), start});
  }
  return out;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<PreparedFrame> augmented_clip(const TrainingScene& scene, const ClipRef& clip,
                                          const TrainConfig& cfg, const TrackerConfig& tracker_cfg,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(cfg.augment_drop_prob);
  std::normal_distribution<double> jitter(0.0, cfg.augment_jitter);
  std::vector<PreparedFrame> frames;
  for (int t = clip.start; t < clip.start + cfg.clip_length; ++t) {
    std::vector<Box3D> dets;
    for (Box3D b : scene.detections[t]) {
      if (drop(rng)) continue;
      b.center[0] += jitter(rng);
      b.center[1] += jitter(rng);
      dets.push_back(b);
    }
    frames.push_back(prepare_frame(dets, scene.ground_truth.frames[t], tracker_cfg.nms_iou,
                                   cfg.label_min_iou));
  }
  return frames;
}

}  // namespace

std::vector<TrainLogRow> fit(Model& model, std::span<const TrainingScene> scenes,
                             const TrackerConfig& tracker_cfg, const TrainConfig& cfg,
                             FitState& state, const FitCallbacks& callbacks) {
  validate(cfg);
  validate(tracker_cfg);
  if (scenes.empty()) throw TrainingError("training set is empty");
  const auto clips = enumerate_clips(scenes, cfg.clip_length);
  if (clips.empty())
    throw TrainingError("no scene has at least " + std::to_string(cfg.clip_length) + " frames");

  std::vector<std::vector<PreparedFrame>> prepared;
  if (!cfg.augmentation) {
    prepared.reserve(scenes.size());
    for (const TrainingScene& s : scenes)
      prepared.push_back(prepare_scene(s, tracker_cfg.nms_iou, cfg.label_min_iou));
  }
  if (state.optimizer.m.empty()) state.optimizer = ad::make_adamw_state(model.params());
  const ad::AdamWConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};

  std::vector<TrainLogRow> log;
  for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(clips.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 shuffle_rng(mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    int batch_index = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size, ++batch_index) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const std::size_t n = b1 - b0;
      std::vector<ad::GradientBuffer> grads(n);
      std::vector<ClipResult> results(n);
      std::vector<std::vector<PreparedFrame>> aug(n);

      auto run = [&](std::size_t k) {
        const std::size_t ci = order[b0 + k];
        const ClipRef& clip = clips[ci];
        const std::uint64_t clip_seed =
            mix(mix(cfg.seed, static_cast<std::uint64_t>(epoch) + 1), static_cast<std::uint64_t>(ci));
        std::span<const PreparedFrame> frames;
        if (cfg.augmentation) {
          aug[k] = augmented_clip(scenes[clip.scene], clip, cfg, tracker_cfg, mix(clip_seed, 7));
          frames = aug[k];
        } else {
          frames = std::span<const PreparedFrame>(prepared[clip.scene])
                       .subspan(clip.start, cfg.clip_length);
        }
        grads[k] = ad::make_gradient_buffer(model.params());
        results[k] = train_clip(model, tracker_cfg, cfg, frames, clip_seed, &grads[k]);
        if (!std::isfinite(results[k].loss))
          throw TrainingError("non-finite loss on clip " + std::to_string(ci) + " (scene " +
                              std::to_string(clip.scene) + ", start frame " +
                              std::to_string(clip.start) + ")");
      };

      if (cfg.threads > 1 && n > 1) {
        std::vector<std::exception_ptr> errors(n);
        for (std::size_t k0 = 0; k0 < n; k0 += cfg.threads) {
          std::vector<std::thread> pool;
          for (std::size_t k = k0; k < std::min(n, k0 + cfg.threads); ++k) {
            pool.emplace_back([&, k] {
              try {
                run(k);
              } catch (...) {
                errors[k] = std::current_exception();
              }
            });
          }
          for (auto& th : pool) th.join();
        }
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
      } else {
        for (std::size_t k = 0; k < n; ++k) run(k);
      }

      ad::ParameterSet& params = model.params();
      params.zero_grad();
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t p = 0; p < params.size(); ++p) params[p].grad += grads[k][p];
      ad::adamw_step(params, state.optimizer, adam);

      TrainLogRow row{epoch, batch_index, 0.0, 0.0, 0.0};
      for (const ClipResult& r : results) {
        row.l_seq += r.loss;
        for (const FrameLossRecord& f : r.frames) {
          row.l_a += f.affinity;
          row.l_v += f.velocity;
        }
      }
      row.l_seq /= static_cast<double>(n);
      row.l_a /= static_cast<double>(n);
      row.l_v /= static_cast<double>(n);
      log.push_back(row);
      if (callbacks.on_batch) callbacks.on_batch(row);
    }
    state.next_epoch = epoch + 1;
    if (callbacks.on_epoch_end) callbacks.on_epoch_end(epoch, state);
  }
  return log;
}

}  // namespace motformer
