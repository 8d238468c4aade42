#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "motformer/geometry.hpp"
#include "motformer/metrics.hpp"
#include "motformer/simulator.hpp"

namespace motformer {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Detection / ground-truth record, one JSON object per line:
// {frame, timestamp, center, size, yaw, velocity, class, score, gt_id?}
std::string detection_line(const Box3D& box, const std::vector<std::string>& class_names,
                           std::optional<int> gt_id = std::nullopt);

// Tracking record: {frame, timestamp, id, class, center, size, yaw, velocity, score}
std::string tracking_line(const LabeledBox& track, const std::vector<std::string>& class_names);

void write_detections(const std::filesystem::path& path, const DetectionFrames& frames,
                      const std::vector<std::string>& class_names);
void write_ground_truth(const std::filesystem::path& path, const GroundTruthScene& scene,
                        const std::vector<std::string>& class_names);
void write_tracking(const std::filesystem::path& path,
                    const std::vector<std::vector<LabeledBox>>& frames,
                    const std::vector<std::string>& class_names);

/// Frames are indexed by the `frame` field; the result has
/// max(num_frames, last frame + 1) entries.
DetectionFrames read_detections(const std::filesystem::path& path,
                                const std::vector<std::string>& class_names, int num_frames = 0);
/// Requires gt_id on every record.
GroundTruthScene read_ground_truth(const std::filesystem::path& path,
                                   const std::vector<std::string>& class_names,
                                   double frame_period, int num_frames = 0);
std::vector<std::vector<LabeledBox>> read_tracking(const std::filesystem::path& path,
                                                   const std::vector<std::string>& class_names,
                                                   int num_frames = 0);

// A generated split: <dir>/manifest.json plus scene_NNNN.det.jsonl and
// scene_NNNN.gt.jsonl per scene.
struct SplitManifest {
  std::vector<std::string> scenes;   // scene stems, e.g. "scene_0000"
  std::vector<int> num_frames;
  double frame_period = 0.5;
  std::vector<std::string> class_names;
};

void write_manifest(const std::filesystem::path& dir, const SplitManifest& manifest);
SplitManifest read_manifest(const std::filesystem::path& dir);

std::string scene_stem(int index);

std::string metrics_report_json(const MetricsReport& report,
                                const std::vector<std::string>& class_names,
                                const EvalConfig& cfg);

/// Columns: class, recall, threshold, achieved, motar, mota, motp.
std::string curves_csv(const MetricsReport& report, const std::vector<std::string>& class_names);

/// Line plot of one curve metric ("motar", "mota" or "motp") against recall,
/// one polyline per class.
std::string curve_svg(const MetricsReport& report, const std::vector<std::string>& class_names,
                      const std::string& metric);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace motformer
