#include "motformer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

#include "motformer/simulator.hpp"

namespace motformer {

void validate(const EvalConfig& cfg) {
  if (!(cfg.match_distance > 0.0)) throw ConfigError("eval.match_distance must be > 0");
  if (cfg.recall_samples < 2) throw ConfigError("eval.recall_samples must be >= 2");
  for (int c : cfg.classes)
    if (c < 0) throw ConfigError("eval.classes must hold class ids >= 0");
}

FrameEvalCounts& FrameEvalCounts::operator+=(const FrameEvalCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  ids += o.ids;
  frag += o.frag;
  distance_sum += o.distance_sum;
  return *this;
}

FrameMatch match_frame(const std::vector<LabeledBox>& predictions,
                       const std::vector<LabeledBox>& ground_truth, double match_distance,
                       MatchMemory& memory) {
  const int ng = static_cast<int>(ground_truth.size());
  const int np = static_cast<int>(predictions.size());
  std::vector<bool> gt_used(ng, false), pred_used(np, false);
  FrameMatch out;

  auto dist = [&](int g, int p) { return center_distance(ground_truth[g].box, predictions[p].box); };

  for (int g = 0; g < ng; ++g) {
    auto it = memory.previous.find(ground_truth[g].id);
    if (it == memory.previous.end()) continue;
    for (int p = 0; p < np; ++p) {
      if (pred_used[p] || predictions[p].id != it->second) continue;
      if (dist(g, p) <= match_distance) {
        gt_used[g] = pred_used[p] = true;
        out.pairs.emplace_back(g, p);
      }
      break;
    }
  }

  std::vector<std::tuple<double, int, int>> candidates;
  for (int g = 0; g < ng; ++g) {
    if (gt_used[g]) continue;
    for (int p = 0; p < np; ++p) {
      if (pred_used[p]) continue;
      const double d = dist(g, p);
      if (d <= match_distance) candidates.emplace_back(d, g, p);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  for (auto [d, g, p] : candidates) {
    if (gt_used[g] || pred_used[p]) continue;
    gt_used[g] = pred_used[p] = true;
    out.pairs.emplace_back(g, p);
  }
  std::sort(out.pairs.begin(), out.pairs.end());

  FrameEvalCounts& c = out.counts;
  c.tp = static_cast<long>(out.pairs.size());
  c.fp = np - c.tp;
  c.fn = ng - c.tp;
  std::vector<int> matched_track(ng, -1);
  for (auto [g, p] : out.pairs) {
    matched_track[g] = predictions[p].id;
    c.distance_sum += dist(g, p);
  }

  memory.previous.clear();
  for (int g = 0; g < ng; ++g) {
    const int gid = ground_truth[g].id;
    const bool tracked = matched_track[g] >= 0;
    memory.total_frames[gid] += 1;
    if (tracked) {
      memory.tracked_frames[gid] += 1;
      auto last = memory.last_track.find(gid);
      if (last != memory.last_track.end()) {
        if (last->second != matched_track[g]) c.ids += 1;
        auto was = memory.was_tracked.find(gid);
        if (was != memory.was_tracked.end() && !was->second) c.frag += 1;
      }
      memory.last_track[gid] = matched_track[g];
      memory.previous[gid] = matched_track[g];
    }
    memory.was_tracked[gid] = tracked;
  }
  return out;
}

double mota(const FrameEvalCounts& counts, long gt_total) {
  if (gt_total <= 0) throw std::invalid_argument("mota: gt_total must be > 0");
  return 1.0 - static_cast<double>(counts.fp + counts.fn + counts.ids) / static_cast<double>(gt_total);
}

double motar(const FrameEvalCounts& counts, double recall, long positives) {
  if (positives <= 0 || !(recall > 0.0)) throw std::invalid_argument("motar: needs recall > 0 and positives > 0");
  const double p = static_cast<double>(positives);
  const double v =
      1.0 - (static_cast<double>(counts.ids + counts.fp + counts.fn) - (1.0 - recall) * p) / (recall * p);
  return std::clamp(v, 0.0, 1.0);
}

namespace {

SweepResult run_class(const std::vector<EvalSequence>& sequences, int class_id,
                      double match_distance, double threshold, std::vector<double>* tp_scores) {
  SweepResult r;
  for (const EvalSequence& seq : sequences) {
    if (seq.predictions.size() > seq.ground_truth.size())
      throw std::invalid_argument("evaluation: predictions extend past the ground truth");
    MatchMemory memory;
    for (std::size_t f = 0; f < seq.ground_truth.size(); ++f) {
      std::vector<LabeledBox> preds, gts;
      if (f < seq.predictions.size())
        for (const LabeledBox& b : seq.predictions[f])
          if (b.box.class_id == class_id && b.box.score >= threshold) preds.push_back(b);
      for (const LabeledBox& b : seq.ground_truth[f])
        if (b.box.class_id == class_id) gts.push_back(b);
      FrameMatch m = match_frame(preds, gts, match_distance, memory);
      r.counts += m.counts;
      if (tp_scores != nullptr)
        for (auto [g, p] : m.pairs) tp_scores->push_back(preds[p].box.score);
    }
    for (const auto& [gid, total] : memory.total_frames) {
      auto it = memory.tracked_frames.find(gid);
      const double frac = it == memory.tracked_frames.end() ? 0.0 : static_cast<double>(it->second) / total;
      r.trajectories += 1;
      if (frac >= 0.8) r.mostly_tracked += 1;
      if (frac <= 0.2) r.mostly_lost += 1;
    }
  }
  return r;
}

constexpr double kNoThreshold = -std::numeric_limits<double>::infinity();

}  // namespace

SweepResult evaluate_class(const std::vector<EvalSequence>& sequences, int class_id,
                           double match_distance, double threshold) {
  return run_class(sequences, class_id, match_distance, threshold, nullptr);
}

std::vector<double> recall_targets(int recall_samples) {
  std::vector<double> out;
  for (int k = 1; k < recall_samples; ++k)
    out.push_back(static_cast<double>(k) / static_cast<double>(recall_samples - 1));
  return out;
}

ClassMetrics amota_amotp(const std::vector<EvalSequence>& sequences, int class_id,
                         const EvalConfig& cfg) {
  ClassMetrics m;
  m.class_id = class_id;
  std::vector<double> tp_scores;
  const SweepResult full = run_class(sequences, class_id, cfg.match_distance, kNoThreshold, &tp_scores);
  m.gt_total = full.counts.gt();
  if (m.gt_total == 0) return m;
  std::sort(tp_scores.begin(), tp_scores.end(), std::greater<>());

  std::map<double, SweepResult> cache;
  double motar_sum = 0.0, motp_sum = 0.0;
  int achieved = 0;
  const auto targets = recall_targets(cfg.recall_samples);
  for (double r : targets) {
    CurvePoint pt;
    pt.recall = r;
    const auto need = static_cast<std::size_t>(std::ceil(r * static_cast<double>(m.gt_total) - 1e-9));
    if (need == 0 || need > tp_scores.size()) {
      pt.threshold = std::numeric_limits<double>::quiet_NaN();
      m.curve.push_back(pt);
      continue;
    }
    pt.threshold = tp_scores[need - 1];
    auto it = cache.find(pt.threshold);
    if (it == cache.end())
      it = cache.emplace(pt.threshold,
                         run_class(sequences, class_id, cfg.match_distance, pt.threshold, nullptr)).first;
    const FrameEvalCounts& c = it->second.counts;
    pt.achieved = true;
    pt.motar = motar(c, r, m.gt_total);
    pt.mota = mota(c, m.gt_total);
    pt.motp = c.tp > 0 ? c.distance_sum / static_cast<double>(c.tp) : cfg.match_distance;
    motar_sum += pt.motar;
    motp_sum += pt.motp;
    achieved += 1;
    m.curve.push_back(pt);
  }
  m.amota = motar_sum / static_cast<double>(targets.size());
  m.amotp = achieved > 0 ? motp_sum / achieved : cfg.match_distance;
  return m;
}

void secondary_metrics(const std::vector<EvalSequence>& sequences, ClassMetrics& m,
                       const EvalConfig& cfg) {
  if (m.gt_total == 0) return;
  std::vector<double> thresholds{kNoThreshold};
  for (const CurvePoint& pt : m.curve)
    if (pt.achieved) thresholds.push_back(pt.threshold);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  bool first = true;
  double best = 0.0;
  for (double thr : thresholds) {
    const SweepResult r = run_class(sequences, m.class_id, cfg.match_distance, thr, nullptr);
    const double value = mota(r.counts, m.gt_total);
    if (!first && !(value > best)) continue;
    first = false;
    best = value;
    m.best_threshold = thr;
    m.mota = value;
    m.motp = r.counts.tp > 0 ? r.counts.distance_sum / static_cast<double>(r.counts.tp) : 0.0;
    m.recall = static_cast<double>(r.counts.tp) / static_cast<double>(m.gt_total);
    m.ids = r.counts.ids;
    m.frag = r.counts.frag;
    m.tp = r.counts.tp;
    m.fp = r.counts.fp;
    m.fn = r.counts.fn;
    m.mostly_tracked = r.mostly_tracked;
    m.mostly_lost = r.mostly_lost;
    m.trajectories = r.trajectories;
  }
}

MetricsReport evaluate(const std::vector<EvalSequence>& sequences, const EvalConfig& cfg) {
  validate(cfg);
  std::vector<int> classes = cfg.classes;
  if (classes.empty()) {
    std::set<int> seen;
    for (const EvalSequence& s : sequences)
      for (const auto& frame : s.ground_truth)
        for (const LabeledBox& b : frame) seen.insert(b.box.class_id);
    classes.assign(seen.begin(), seen.end());
  }
  MetricsReport report;
  int counted = 0;
  for (int c : classes) {
    ClassMetrics m = amota_amotp(sequences, c, cfg);
    if (m.gt_total == 0) continue;
    secondary_metrics(sequences, m, cfg);
    report.amota += m.amota;
    report.amotp += m.amotp;
    report.mota += m.mota;
    report.motp += m.motp;
    report.ids += m.ids;
    report.frag += m.frag;
    report.tp += m.tp;
    report.fp += m.fp;
    report.fn += m.fn;
    report.mostly_tracked += m.mostly_tracked;
    report.mostly_lost += m.mostly_lost;
    report.per_class.push_back(std::move(m));
    counted += 1;
  }
  if (counted > 0) {
    report.amota /= counted;
    report.amotp /= counted;
    report.mota /= counted;
    report.motp /= counted;
  }
  return report;
}

}  // namespace motformer
