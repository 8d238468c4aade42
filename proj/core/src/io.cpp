#include "motformer/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace motformer {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int class_index(const std::string& name, const std::vector<std::string>& names) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw IoError("unknown class '" + name + "'");
  return static_cast<int>(it - names.begin());
}

json box_fields(const Box3D& b, const std::vector<std::string>& names) {
  if (b.class_id < 0 || b.class_id >= static_cast<int>(names.size()))
    throw IoError("class id " + std::to_string(b.class_id) + " has no name");
  return {{"frame", b.frame},
          {"timestamp", b.timestamp},
          {"center", b.center},
          {"size", b.size},
          {"yaw", b.yaw},
          {"velocity", b.velocity},
          {"class", names[b.class_id]},
          {"score", b.score}};
}

Box3D parse_box(const json& j, const std::vector<std::string>& names) {
  Box3D b;
  b.frame = j.at("frame").get<int>();
  b.timestamp = j.at("timestamp").get<double>();
  b.center = j.at("center").get<std::array<double, 3>>();
  b.size = j.at("size").get<std::array<double, 3>>();
  b.yaw = j.at("yaw").get<double>();
  b.velocity = j.at("velocity").get<std::array<double, 2>>();
  b.class_id = class_index(j.at("class").get<std::string>(), names);
  b.score = j.at("score").get<double>();
  if (b.frame < 0) throw IoError("negative frame index");
  if (!is_valid(b)) throw IoError("box violates size/yaw/score constraints");
  return b;
}

// Calls fn(json, line_number) for every non-empty line.
template <typename F>
void for_each_record(const fs::path& path, F&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line), lineno);
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const IoError& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

template <typename T>
void grow(std::vector<std::vector<T>>& frames, int frame) {
  if (frame >= static_cast<int>(frames.size())) frames.resize(frame + 1);
}

}  // namespace

std::string detection_line(const Box3D& box, const std::vector<std::string>& class_names,
                           std::optional<int> gt_id) {
  json j = box_fields(box, class_names);
  if (gt_id) j["gt_id"] = *gt_id;
  return j.dump();
}

std::string tracking_line(const LabeledBox& t, const std::vector<std::string>& class_names) {
  const Box3D& b = t.box;
  if (b.class_id < 0 || b.class_id >= static_cast<int>(class_names.size()))
    throw IoError("class id " + std::to_string(b.class_id) + " has no name");
  json j = {{"frame", b.frame},      {"timestamp", b.timestamp},
            {"id", t.id},            {"class", class_names[b.class_id]},
            {"center", b.center},    {"size", b.size},
            {"yaw", b.yaw},          {"velocity", b.velocity},
            {"score", b.score}};
  return j.dump();
}

void write_detections(const fs::path& path, const DetectionFrames& frames,
                      const std::vector<std::string>& class_names) {
  auto out = open_out(path);
  for (const auto& frame : frames)
    for (const Box3D& b : frame) out << detection_line(b, class_names) << '\n';
}

void write_ground_truth(const fs::path& path, const GroundTruthScene& scene,
                        const std::vector<std::string>& class_names) {
  auto out = open_out(path);
  for (const auto& frame : scene.frames)
    for (const LabeledBox& b : frame) out << detection_line(b.box, class_names, b.id) << '\n';
}

void write_tracking(const fs::path& path, const std::vector<std::vector<LabeledBox>>& frames,
                    const std::vector<std::string>& class_names) {
  auto out = open_out(path);
  for (const auto& frame : frames)
    for (const LabeledBox& t : frame) out << tracking_line(t, class_names) << '\n';
}

DetectionFrames read_detections(const fs::path& path, const std::vector<std::string>& class_names,
                                int num_frames) {
  DetectionFrames frames(std::max(num_frames, 0));
  for_each_record(path, [&](const json& j, int) {
    Box3D b = parse_box(j, class_names);
    grow(frames, b.frame);
    frames[b.frame].push_back(b);
  });
  return frames;
}

GroundTruthScene read_ground_truth(const fs::path& path, const std::vector<std::string>& class_names,
                                   double frame_period, int num_frames) {
  GroundTruthScene scene;
  scene.frame_period = frame_period;
  scene.frames.resize(std::max(num_frames, 0));
  for_each_record(path, [&](const json& j, int) {
    if (!j.contains("gt_id")) throw IoError("ground-truth record lacks gt_id");
    LabeledBox lb{j.at("gt_id").get<int>(), parse_box(j, class_names)};
    if (lb.id < 0) throw IoError("gt_id must be >= 0");
    grow(scene.frames, lb.box.frame);
    for (const LabeledBox& other : scene.frames[lb.box.frame])
      if (other.id == lb.id) throw IoError("gt_id " + std::to_string(lb.id) + " repeated in a frame");
    scene.frames[lb.box.frame].push_back(lb);
  });
  return scene;
}

std::vector<std::vector<LabeledBox>> read_tracking(const fs::path& path,
                                                   const std::vector<std::string>& class_names,
                                                   int num_frames) {
  std::vector<std::vector<LabeledBox>> frames(std::max(num_frames, 0));
  for_each_record(path, [&](const json& j, int) {
    LabeledBox lb{j.at("id").get<int>(), parse_box(j, class_names)};
    grow(frames, lb.box.frame);
    frames[lb.box.frame].push_back(lb);
  });
  return frames;
}

std::string scene_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04d", index);
  return buf;
}

void write_manifest(const fs::path& dir, const SplitManifest& m) {
  json j = {{"scenes", m.scenes},
            {"num_frames", m.num_frames},
            {"frame_period", m.frame_period},
            {"classes", m.class_names}};
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

SplitManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  SplitManifest m;
  try {
    const json j = json::parse(read_text(path));
    m.scenes = j.at("scenes").get<std::vector<std::string>>();
    m.num_frames = j.at("num_frames").get<std::vector<int>>();
    m.frame_period = j.at("frame_period").get<double>();
    m.class_names = j.at("classes").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  if (m.scenes.size() != m.num_frames.size())
    throw IoError(path.string() + ": scenes and num_frames differ in length");
  return m;
}

namespace {

json class_json(const ClassMetrics& m) {
  json curve = json::array();
  for (const CurvePoint& p : m.curve) {
    curve.push_back({{"recall", p.recall},
                     {"threshold", p.achieved ? json(p.threshold) : json(nullptr)},
                     {"achieved", p.achieved},
                     {"motar", p.motar},
                     {"mota", p.mota},
                     {"motp", p.motp}});
  }
  return {{"gt", m.gt_total},
          {"amota", m.amota},
          {"amotp", m.amotp},
          {"mota", m.mota},
          {"motp", m.motp},
          {"recall", m.recall},
          {"best_threshold", std::isfinite(m.best_threshold) ? json(m.best_threshold) : json(nullptr)},
          {"ids", m.ids},
          {"frag", m.frag},
          {"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"mt", m.mostly_tracked},
          {"ml", m.mostly_lost},
          {"trajectories", m.trajectories},
          {"curve", curve}};
}

}  // namespace

std::string metrics_report_json(const MetricsReport& r, const std::vector<std::string>& names,
                                const EvalConfig& cfg) {
  json per_class = json::object();
  for (const ClassMetrics& m : r.per_class) per_class[names.at(m.class_id)] = class_json(m);
  json classes = json::array();
  for (int c : cfg.classes) classes.push_back(names.at(c));
  json j = {{"per_class", per_class},
            {"mean",
             {{"amota", r.amota},
              {"amotp", r.amotp},
              {"mota", r.mota},
              {"motp", r.motp},
              {"ids", r.ids},
              {"frag", r.frag},
              {"tp", r.tp},
              {"fp", r.fp},
              {"fn", r.fn},
              {"mt", r.mostly_tracked},
              {"ml", r.mostly_lost}}},
            {"config",
             {{"match_distance", cfg.match_distance},
              {"recall_samples", cfg.recall_samples},
              {"classes", classes}}}};
  return j.dump(2) + "\n";
}

std::string curves_csv(const MetricsReport& r, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "class,recall,threshold,achieved,motar,mota,motp\n";
  for (const ClassMetrics& m : r.per_class) {
    for (const CurvePoint& p : m.curve) {
      out << names.at(m.class_id) << ',' << p.recall << ',';
      if (p.achieved) out << p.threshold;
      out << ',' << (p.achieved ? 1 : 0) << ',' << p.motar << ',' << p.mota << ',' << p.motp << '\n';
    }
  }
  return out.str();
}

std::string curve_svg(const MetricsReport& r, const std::vector<std::string>& names,
                      const std::string& metric) {
  if (metric != "motar" && metric != "mota" && metric != "motp")
    throw IoError("unknown curve metric '" + metric + "'");
  auto value = [&](const CurvePoint& p) {
    return metric == "motar" ? p.motar : metric == "mota" ? p.mota : p.motp;
  };
  double y_min = 0.0, y_max = 1.0;
  for (const ClassMetrics& m : r.per_class)
    for (const CurvePoint& p : m.curve)
      if (p.achieved) {
        y_min = std::min(y_min, value(p));
        y_max = std::max(y_max, value(p));
      }
  const double w = 480, h = 320, left = 50, right = 110, top = 20, bottom = 40;
  auto sx = [&](double x) { return left + x * (w - left - right); };
  auto sy = [&](double y) { return top + (y_max - y) / (y_max - y_min) * (h - top - bottom); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << sx(0) << "\" y1=\"" << sy(y_min) << "\" x2=\"" << sx(1) << "\" y2=\""
      << sy(y_min) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << sx(0) << "\" y1=\"" << sy(y_min) << "\" x2=\"" << sx(0) << "\" y2=\""
      << sy(y_max) << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << sx(0.5) << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\" font-size=\"12\">recall</text>\n";
  out << "<text x=\"12\" y=\"" << sy((y_min + y_max) / 2) << "\" font-size=\"12\">" << metric << "</text>\n";
  for (double t : {0.0, 0.5, 1.0}) {
    out << "<text x=\"" << sx(t) << "\" y=\"" << sy(y_min) + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
        << t << "</text>\n";
  }
  out << "<text x=\"" << left - 4 << "\" y=\"" << sy(y_max) + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
      << y_max << "</text>\n";
  out << "<text x=\"" << left - 4 << "\" y=\"" << sy(y_min) << "\" text-anchor=\"end\" font-size=\"10\">"
      << y_min << "</text>\n";
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const ClassMetrics& m = r.per_class[k];
    const char* color = colors[k % std::size(colors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const CurvePoint& p : m.curve)
      if (p.achieved) out << sx(p.recall) << ',' << sy(value(p)) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << w - right + 8 << "\" y=\"" << top + 14 * (k + 1) << "\" font-size=\"11\" fill=\""
        << color << "\">" << names.at(m.class_id) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace motformer
