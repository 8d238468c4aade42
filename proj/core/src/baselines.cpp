#include "motformer/baselines.hpp"

#include "motformer/matching.hpp"
#include "motformer/simulator.hpp"
#include "motformer/tracker.hpp"

namespace motformer {

void validate(const BaselineConfig& cfg) {
  if (cfg.max_age < 1) throw ConfigError("baseline.max_age must be >= 1");
  if (!(cfg.nms_iou > 0.0 && cfg.nms_iou < 1.0)) throw ConfigError("baseline.nms_iou must be in (0, 1)");
  if (!(cfg.frame_period > 0.0)) throw ConfigError("baseline.frame_period must be > 0");
  validate(cfg.graph);
}

std::vector<std::vector<LabeledBox>> cv_greedy_track(const std::vector<std::vector<Box3D>>& frames,
                                                     const BaselineConfig& cfg) {
  validate(cfg);
  TrackerConfig life;
  life.max_age = cfg.max_age;
  life.frame_period = cfg.frame_period;

  std::vector<std::vector<LabeledBox>> out;
  std::vector<Track> tracks;
  int next_id = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const int frame = static_cast<int>(f);
    const auto dets = nms(frames[f], cfg.nms_iou);
    // Same gating as the learned tracker's association graph.
    const SparseGraph assoc =
        build_association_graph(tracks, dets, cfg.graph, frame, cfg.frame_period);
    AffinityTable table;
    table.num_tracks = static_cast<int>(tracks.size());
    for (const Box3D& d : dets) table.detection_scores.push_back(d.score);
    for (std::size_t e = 0; e < assoc.edges.size(); ++e) {
      const double distance = assoc.features[e][8];
      table.entries.push_back({assoc.edges[e].src, assoc.edges[e].dst, 1.0 / (1.0 + distance)});
    }
    const MatchResult match = greedy_match(table, 0.0);

    std::vector<std::array<double, 2>> velocities;
    for (const Box3D& d : dets) velocities.push_back(d.velocity);
    TrackUpdate up = update_tracks(match, tracks, dets, velocities, {}, frame, next_id, life);
    next_id = up.next_id;
    std::vector<LabeledBox> emitted;
    for (int idx : up.emitted) emitted.push_back({up.tracks[idx].id, up.tracks[idx].box});
    tracks = std::move(up.tracks);
    out.push_back(std::move(emitted));
  }
  return out;
}

}  // namespace motformer
