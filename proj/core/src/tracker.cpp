#include "motformer/tracker.hpp"

#include <memory>
#include <numeric>

namespace motformer {

using ad::Tensor;

void validate(const TrackerConfig& cfg) {
  if (cfg.max_age < 1) throw ConfigError("tracker.max_age must be >= 1");
  if (!(cfg.min_affinity >= 0.0 && cfg.min_affinity < 1.0))
    throw ConfigError("tracker.min_affinity must be in [0, 1)");
  if (!(cfg.score_decay >= 0.0 && cfg.score_decay <= 1.0))
    throw ConfigError("tracker.score_decay must be in [0, 1]");
  if (!(cfg.nms_iou > 0.0 && cfg.nms_iou < 1.0)) throw ConfigError("tracker.nms_iou must be in (0, 1)");
  if (!(cfg.frame_period > 0.0)) throw ConfigError("tracker.frame_period must be > 0");
  if (!(cfg.ablation.radius_multiplier > 0.0))
    throw ConfigError("tracker.ablation.radius_multiplier must be > 0");
  validate(cfg.graph);
}

GraphBuildConfig effective_graph_config(const TrackerConfig& cfg) {
  GraphBuildConfig g = cfg.graph;
  g.radius_multiplier *= cfg.ablation.radius_multiplier;
  g.fully_connected_assoc = g.fully_connected_assoc || cfg.ablation.fully_connected_assoc;
  return g;
}

TrackUpdate update_tracks(const MatchResult& match, std::span<const Track> tracks,
                          std::span<const Box3D> detections,
                          std::span<const std::array<double, 2>> velocities,
                          std::span<const int> detection_identities, int frame, int next_id,
                          const TrackerConfig& cfg) {
  const int num_dets = static_cast<int>(detections.size());
  std::vector<int> det_of_track(tracks.size(), -1);
  for (auto [d, t] : match.matched) det_of_track[t] = d;

  TrackUpdate up;
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    Track trk = tracks[t];
    const int d = det_of_track[t];
    if (d >= 0) {
      trk.box = detections[d];
      trk.velocity_est = velocities[d];
      trk.last_update_frame = frame;
      trk.age_since_match = 0;
      trk.score = detections[d].score;
      up.emitted.push_back(static_cast<int>(up.tracks.size()));
      up.tracks.push_back(trk);
      up.feature_rows.push_back(d);
    } else {
      if (trk.age_since_match + 1 >= cfg.max_age) continue;
      trk.age_since_match += 1;
      trk.score *= cfg.score_decay;
      up.tracks.push_back(trk);
      up.feature_rows.push_back(num_dets + static_cast<int>(t));
    }
  }
  for (int d : match.unmatched_detections) {
    Track trk;
    trk.id = next_id++;
    trk.box = detections[d];
    trk.velocity_est = velocities[d];
    trk.last_update_frame = frame;
    trk.age_since_match = 0;
    trk.class_id = detections[d].class_id;
    trk.score = detections[d].score;
    trk.identity = detection_identities.empty() ? -1 : detection_identities[d];
    up.emitted.push_back(static_cast<int>(up.tracks.size()));
    up.tracks.push_back(trk);
    up.feature_rows.push_back(d);
  }
  up.next_id = next_id;
  return up;
}

void carry_to(TrackerState& state, ad::Tape& tape) {
  if (state.features.valid()) state.features = tape.constant(state.features.value());
  if (state.velocities.valid()) state.velocities = tape.constant(state.velocities.value());
}

namespace {

// Association edge features on the tape. The predicted-center distance
// depends on the carried velocity estimates, so it is recomputed from
// `velocities` to let gradients reach the velocity head of earlier frames.
Tensor edge_inputs(ad::Tape& tape, const SparseGraph& assoc, std::span<const Track> tracks,
                   std::span<const Box3D> detections, const Tensor& velocities, int frame,
                   double frame_period) {
  ad::Matrix raw = edge_feature_matrix(assoc);
  const auto e = static_cast<ad::Index>(assoc.edges.size());
  if (e == 0 || !velocities.valid()) return tape.constant(std::move(raw));
  ad::Matrix offset(e, 2), horizon(e, 2);
  std::vector<int> src(e);
  for (ad::Index k = 0; k < e; ++k) {
    const Edge& edge = assoc.edges[k];
    const Track& t = tracks[edge.src];
    const Box3D& d = detections[edge.dst];
    src[k] = edge.src;
    offset(k, 0) = t.box.center[0] - d.center[0];
    offset(k, 1) = t.box.center[1] - d.center[1];
    horizon.row(k).setConstant((frame - t.last_update_frame) * frame_period);
  }
  const Tensor moved = ad::mul(ad::row_gather(velocities, src), tape.constant(std::move(horizon)));
  const Tensor diff = ad::add(moved, tape.constant(std::move(offset)));
  const Tensor dist = ad::sqrt(ad::sum_col_blocks(ad::mul(diff, diff), 2));
  std::array<Tensor, 2> parts{tape.constant(raw.leftCols(kEdgeFeatureDim - 1)), dist};
  return ad::concat(parts, 1);
}

}  // namespace

Tracker::Tracker(Model& model, TrackerConfig cfg)
    : model_(model), cfg_(std::move(cfg)), graph_cfg_(effective_graph_config(cfg_)) {
  validate(cfg_);
  if (static_cast<int>(graph_cfg_.class_radii.size()) < model_.config().num_classes &&
      !graph_cfg_.fully_connected_assoc)
    throw ConfigError("graph.class_radii must cover every class");
}

std::vector<Box3D> Tracker::preprocess(std::span<const Box3D> detections) const {
  return nms(detections, cfg_.nms_iou);
}

StepResult Tracker::step(ad::Tape& tape, TrackerState& state, std::span<const Box3D> detections,
                         int frame) {
  const auto kept = preprocess(detections);
  return step_preprocessed(tape, state, kept, frame);
}

MatchResult Tracker::associate(const StepResult& r, std::span<const int> identities) const {
  AffinityTable table;
  table.num_tracks = static_cast<int>(r.tracks.size());
  for (const Box3D& d : r.detections) table.detection_scores.push_back(d.score);
  const ad::Matrix& logits = r.affinity_logits.value();
  for (std::size_t e = 0; e < r.assoc_graph.edges.size(); ++e) {
    const Edge& edge = r.assoc_graph.edges[e];
    const double a = 1.0 / (1.0 + std::exp(-logits(static_cast<ad::Index>(e), 0)));
    table.entries.push_back({edge.src, edge.dst, a});
  }
  if (cfg_.ablation.gt_identity_guided && !identities.empty()) {
    // Keep only edges whose endpoints share a ground-truth identity.
    AffinityTable guided = table;
    guided.entries.clear();
    for (const AffinityEntry& e : table.entries) {
      const int id = identities[e.detection];
      if (id >= 0 && r.tracks[e.track].identity == id) guided.entries.push_back(e);
    }
    return greedy_match(guided, -1.0);
  }
  if (cfg_.ablation.use_hungarian) return hungarian_match(table, cfg_.min_affinity);
  return greedy_match(table, cfg_.min_affinity);
}

StepResult Tracker::step_preprocessed(ad::Tape& tape, TrackerState& state,
                                      std::span<const Box3D> detections, int frame,
                                      std::span<const int> identities) {
  const ModelConfig& mc = model_.config();
  StepResult r;
  r.detections.assign(detections.begin(), detections.end());
  r.tracks = state.tracks;
  const int num_dets = static_cast<int>(detections.size());
  const int num_tracks = static_cast<int>(state.tracks.size());

  if (num_dets > 0 && !state.origin) {
    std::array<double, 2> c{0.0, 0.0};
    for (const Box3D& d : detections) {
      c[0] += d.center[0];
      c[1] += d.center[1];
    }
    state.origin = std::array<double, 2>{c[0] / num_dets, c[1] / num_dets};
  }
  const std::array<double, 2> origin = state.origin.value_or(std::array<double, 2>{0.0, 0.0});

  if (num_dets == 0) {
    r.match.unmatched_tracks.resize(num_tracks);
    std::iota(r.match.unmatched_tracks.begin(), r.match.unmatched_tracks.end(), 0);
    TrackUpdate up = update_tracks(r.match, state.tracks, {}, {}, {}, frame, state.next_id, cfg_);
    if (!up.tracks.empty()) {
      state.features = ad::row_gather(state.features, up.feature_rows);
      state.velocities = ad::row_gather(state.velocities, up.feature_rows);
    } else {
      state.features = Tensor();
      state.velocities = Tensor();
    }
    state.tracks = std::move(up.tracks);
    state.next_id = up.next_id;
    if (cfg_.emit_inactive) {
      for (const Track& t : state.tracks) {
        LabeledBox lb{t.id, predict_box(t.box, t.velocity_est,
                                        (frame - t.last_update_frame) * cfg_.frame_period)};
        lb.box.score = t.score;
        lb.box.frame = frame;
        lb.box.timestamp = frame * cfg_.frame_period;
        r.output.push_back(lb);
      }
    }
    return r;
  }

  Tensor h_d0 = model_.embed_detections(
      tape, tape.constant(detection_features(detections, mc.num_classes, origin)));

  Tensor h_t0;
  if (num_tracks == 0) {
    h_t0 = tape.constant(ad::Matrix(0, mc.dim));
  } else if (cfg_.ablation.no_hidden_state) {
    std::vector<Box3D> boxes;
    for (const Track& t : state.tracks) boxes.push_back(t.box);
    h_t0 = model_.embed_detections(tape, tape.constant(detection_features(boxes, mc.num_classes, origin)));
  } else {
    h_t0 = state.features;
  }

  const SparseGraph track_graph =
      build_track_graph(state.tracks, graph_cfg_, frame, cfg_.frame_period);
  Tensor h_t = model_.encode_tracks(tape, h_t0, track_graph);

  const SparseGraph det_graph = build_detection_graph(detections, graph_cfg_);
  r.assoc_graph =
      build_association_graph(state.tracks, detections, graph_cfg_, frame, cfg_.frame_period);
  Tensor edge_raw;
  if (cfg_.ablation.zero_edge_features) {
    edge_raw = tape.constant(ad::Matrix::Zero(static_cast<ad::Index>(r.assoc_graph.edges.size()),
                                              kEdgeFeatureDim));
  } else {
    edge_raw = edge_inputs(tape, r.assoc_graph, state.tracks, detections, state.velocities, frame,
                           cfg_.frame_period);
  }
  Tensor h_a0 = model_.embed_edges(tape, edge_raw);

  DecodeOutput dec = model_.decode(tape, h_d0, det_graph, h_t, r.assoc_graph, h_a0);
  r.affinity_logits = model_.affinity_logits(tape, dec.edges);
  r.velocities = model_.velocity(tape, dec.detections);

  r.match = associate(r, identities);
  for (const SparseGraph* g : {&track_graph, static_cast<const SparseGraph*>(&r.assoc_graph)})
    for (const Edge& e : g->edges) tape.note_branch((static_cast<std::uint64_t>(e.src) << 32) | e.dst);
  for (auto [d, t] : r.match.matched) tape.note_branch((static_cast<std::uint64_t>(t) << 32) | d | (1ULL << 63));

  Tensor det_vel = r.velocities;
  if (cfg_.ablation.no_velocity_head) {
    ad::Matrix m(num_dets, 2);
    for (int i = 0; i < num_dets; ++i) m.row(i) << detections[i].velocity[0], detections[i].velocity[1];
    det_vel = tape.constant(std::move(m));
  }
  std::vector<std::array<double, 2>> vel(num_dets);
  const ad::Matrix& v = det_vel.value();
  for (int i = 0; i < num_dets; ++i) vel[i] = {v(i, 0), v(i, 1)};
  TrackUpdate up = update_tracks(r.match, state.tracks, detections, vel, identities, frame,
                                 state.next_id, cfg_);

  if (!up.tracks.empty()) {
    std::array<Tensor, 2> parts{dec.detections, h_t};
    state.features = ad::row_gather(ad::concat(parts, 0), up.feature_rows);
    if (num_tracks > 0) {
      std::array<Tensor, 2> vparts{det_vel, state.velocities};
      state.velocities = ad::row_gather(ad::concat(vparts, 0), up.feature_rows);
    } else {
      state.velocities = ad::row_gather(det_vel, up.feature_rows);
    }
  } else {
    state.features = Tensor();
    state.velocities = Tensor();
  }
  state.next_id = up.next_id;

  std::vector<bool> emitted(up.tracks.size(), false);
  for (int idx : up.emitted) {
    emitted[idx] = true;
    const Track& t = up.tracks[idx];
    LabeledBox lb{t.id, t.box};
    lb.box.velocity = t.velocity_est;
    r.output.push_back(lb);
  }
  if (cfg_.emit_inactive) {
    for (std::size_t i = 0; i < up.tracks.size(); ++i) {
      if (emitted[i]) continue;
      const Track& t = up.tracks[i];
      LabeledBox lb{t.id, predict_box(t.box, t.velocity_est,
                                      (frame - t.last_update_frame) * cfg_.frame_period)};
      lb.box.velocity = t.velocity_est;
      lb.box.score = t.score;
      lb.box.frame = frame;
      lb.box.timestamp = frame * cfg_.frame_period;
      r.output.push_back(lb);
    }
  }
  state.tracks = std::move(up.tracks);
  return r;
}

std::vector<std::vector<LabeledBox>> Tracker::run_sequence(
    const std::vector<std::vector<Box3D>>& frames) {
  std::vector<std::vector<LabeledBox>> out;
  out.reserve(frames.size());
  TrackerState state;
  auto tape = std::make_unique<ad::Tape>();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    // Each frame gets a fresh tape; carried features become constants.
    auto next = std::make_unique<ad::Tape>();
    next->set_grad_enabled(false);
    carry_to(state, *next);
    tape = std::move(next);
    StepResult r = step(*tape, state, frames[f], static_cast<int>(f));
    out.push_back(std::move(r.output));
  }
  return out;
}

}  // namespace motformer
