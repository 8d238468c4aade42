#include "motformer/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace motformer {

using nlohmann::json;

namespace {

// Reads fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError(key_path(key) + ": unknown key");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(key_path(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string key_path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_class(const json& j, const std::string& path, ClassSpec& c) {
  Section s(j, path);
  s.get("name", c.name);
  s.get("size_mean", c.size_mean);
  s.get("size_std", c.size_std);
  s.get("max_speed", c.max_speed);
  s.get("min_speed_fraction", c.min_speed_fraction);
  s.get("count_range", c.count_range);
  s.get("ctrv_fraction", c.ctrv_fraction);
  s.get("max_turn_rate", c.max_turn_rate);
}

json write_class(const ClassSpec& c) {
  return {{"name", c.name},
          {"size_mean", c.size_mean},
          {"size_std", c.size_std},
          {"max_speed", c.max_speed},
          {"min_speed_fraction", c.min_speed_fraction},
          {"count_range", c.count_range},
          {"ctrv_fraction", c.ctrv_fraction},
          {"max_turn_rate", c.max_turn_rate}};
}

void read_scene(const json& j, SceneConfig& c) {
  Section s(j, "scene");
  s.get("num_frames", c.num_frames);
  s.get("frame_period", c.frame_period);
  s.get("arena", c.arena);
  s.get("spawn_prob", c.spawn_prob);
  s.get("despawn_prob", c.despawn_prob);
  s.get("min_spawn_spacing", c.min_spawn_spacing);
  if (const json* classes = s.child("classes")) {
    if (!classes->is_array()) throw ConfigError("scene.classes: expected an array");
    c.classes.clear();
    for (std::size_t i = 0; i < classes->size(); ++i) {
      ClassSpec spec;
      read_class((*classes)[i], "scene.classes[" + std::to_string(i) + "]", spec);
      c.classes.push_back(spec);
    }
  }
}

void read_noise(const json& j, NoiseConfig& c) {
  Section s(j, "noise");
  s.get("pos_sigma", c.pos_sigma);
  s.get("size_sigma", c.size_sigma);
  s.get("yaw_sigma", c.yaw_sigma);
  s.get("vel_sigma", c.vel_sigma);
  s.get("miss_prob", c.miss_prob);
  s.get("fp_rate", c.fp_rate);
  if (const json* score = s.child("score")) {
    Section sc(*score, "noise.score");
    sc.get("slope", c.score.slope);
    sc.get("noise_sigma", c.score.noise_sigma);
    sc.get("fp_score_min", c.score.fp_score_min);
    sc.get("fp_score_max", c.score.fp_score_max);
  }
}

void read_model(const json& j, ModelConfig& c) {
  Section s(j, "model");
  s.get("dim", c.dim);
  s.get("heads", c.heads);
  s.get("encoder_layers", c.encoder_layers);
  s.get("decoder_layers", c.decoder_layers);
  s.get("dropout", c.dropout);
  s.get("ffn_multiplier", c.ffn_multiplier);
}

void read_tracker(const json& j, TrackerConfig& c) {
  Section s(j, "tracker");
  s.get("max_age", c.max_age);
  s.get("min_affinity", c.min_affinity);
  s.get("score_decay", c.score_decay);
  s.get("nms_iou", c.nms_iou);
  s.get("emit_inactive", c.emit_inactive);
  if (const json* g = s.child("graph")) {
    Section gs(*g, "tracker.graph");
    gs.get("neighbor_radius", c.graph.neighbor_radius);
    gs.get("class_radii", c.graph.class_radii);
    gs.get("radius_multiplier", c.graph.radius_multiplier);
    gs.get("fully_connected_assoc", c.graph.fully_connected_assoc);
  }
  if (const json* a = s.child("ablation")) {
    Section as(*a, "tracker.ablation");
    as.get("use_hungarian", c.ablation.use_hungarian);
    as.get("gt_identity_guided", c.ablation.gt_identity_guided);
    as.get("no_hidden_state", c.ablation.no_hidden_state);
    as.get("zero_edge_features", c.ablation.zero_edge_features);
    as.get("fully_connected_assoc", c.ablation.fully_connected_assoc);
    as.get("no_velocity_head", c.ablation.no_velocity_head);
    as.get("radius_multiplier", c.ablation.radius_multiplier);
  }
}

void read_train(const json& j, TrainConfig& c) {
  Section s(j, "train");
  s.get("clip_length", c.clip_length);
  s.get("batch_size", c.batch_size);
  s.get("epochs", c.epochs);
  s.get("lr", c.lr);
  s.get("weight_decay", c.weight_decay);
  s.get("focal_alpha", c.focal_alpha);
  s.get("focal_gamma", c.focal_gamma);
  s.get("lambda_v", c.lambda_v);
  s.get("smooth_l1_beta", c.smooth_l1_beta);
  s.get("label_min_iou", c.label_min_iou);
  s.get("augmentation", c.augmentation);
  s.get("augment_drop_prob", c.augment_drop_prob);
  s.get("augment_jitter", c.augment_jitter);
  s.get("threads", c.threads);
}

std::vector<std::string> class_names(const SceneConfig& scene) {
  std::vector<std::string> names;
  for (const ClassSpec& c : scene.classes) names.push_back(c.name);
  return names;
}

void read_eval(const json& j, EvalConfig& c, std::vector<std::string>& class_list) {
  Section s(j, "eval");
  s.get("match_distance", c.match_distance);
  s.get("recall_samples", c.recall_samples);
  s.get("classes", class_list);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t split_tag(std::string_view split) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char ch : split) h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ULL;
  return h;
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.scene = default_scene_config();
  cfg.noise = default_noise_config();
  cfg.model.num_classes = static_cast<int>(cfg.scene.classes.size());
  return cfg;
}

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  RunConfig cfg = default_run_config();
  std::vector<std::string> eval_classes;
  {
    Section root(j, "");
    root.get("seed", cfg.seed);
    root.get("train_scenes", cfg.train_scenes);
    root.get("eval_scenes", cfg.eval_scenes);
    if (const json* x = root.child("scene")) read_scene(*x, cfg.scene);
    if (const json* x = root.child("noise")) read_noise(*x, cfg.noise);
    if (const json* x = root.child("model")) read_model(*x, cfg.model);
    if (const json* x = root.child("tracker")) read_tracker(*x, cfg.tracker);
    if (const json* x = root.child("train")) read_train(*x, cfg.train);
    if (const json* x = root.child("eval")) read_eval(*x, cfg.eval, eval_classes);
    if (const json* x = root.child("paths")) {
      Section p(*x, "paths");
      p.get("data_dir", cfg.paths.data_dir);
      p.get("checkpoint", cfg.paths.checkpoint);
      p.get("output_dir", cfg.paths.output_dir);
    }
  }
  const auto names = class_names(cfg.scene);
  cfg.eval.classes.clear();
  for (const std::string& n : eval_classes) {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) throw ConfigError("eval.classes: unknown class '" + n + "'");
    cfg.eval.classes.push_back(static_cast<int>(it - names.begin()));
  }
  cfg.model.num_classes = static_cast<int>(cfg.scene.classes.size());
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void resolve(RunConfig& cfg) {
  cfg.model.num_classes = static_cast<int>(cfg.scene.classes.size());
  cfg.tracker.frame_period = cfg.scene.frame_period;
  if (cfg.tracker.graph.class_radii.empty() && !cfg.scene.classes.empty())
    cfg.tracker.graph.class_radii =
        default_class_radii(cfg.scene.classes, cfg.scene.frame_period, cfg.tracker.max_age);
  cfg.scene.rng_seed = cfg.seed;
  cfg.noise.rng_seed = mix(cfg.seed, 1);
  cfg.train.seed = mix(cfg.seed, 2);
}

void validate(const RunConfig& cfg) {
  if (cfg.train_scenes < 0 || cfg.eval_scenes < 0)
    throw ConfigError("train_scenes and eval_scenes must be >= 0");
  validate(cfg.scene);
  validate(cfg.noise);
  validate(cfg.model);
  validate(cfg.tracker);
  validate(cfg.train);
  validate(cfg.eval);
  if (static_cast<int>(cfg.tracker.graph.class_radii.size()) != cfg.model.num_classes)
    throw ConfigError("tracker.graph.class_radii must have one entry per class (" +
                      std::to_string(cfg.model.num_classes) + ")");
  for (int c : cfg.eval.classes)
    if (c >= cfg.model.num_classes) throw ConfigError("eval.classes: class id out of range");
}

std::string to_json_string(const RunConfig& cfg) {
  json classes = json::array();
  for (const ClassSpec& c : cfg.scene.classes) classes.push_back(write_class(c));
  json eval_classes = json::array();
  for (int c : cfg.eval.classes) eval_classes.push_back(cfg.scene.classes.at(c).name);
  const TrackerConfig& t = cfg.tracker;
  json j = {
      {"seed", cfg.seed},
      {"train_scenes", cfg.train_scenes},
      {"eval_scenes", cfg.eval_scenes},
      {"scene",
       {{"num_frames", cfg.scene.num_frames},
        {"frame_period", cfg.scene.frame_period},
        {"arena", cfg.scene.arena},
        {"spawn_prob", cfg.scene.spawn_prob},
        {"despawn_prob", cfg.scene.despawn_prob},
        {"min_spawn_spacing", cfg.scene.min_spawn_spacing},
        {"classes", classes}}},
      {"noise",
       {{"pos_sigma", cfg.noise.pos_sigma},
        {"size_sigma", cfg.noise.size_sigma},
        {"yaw_sigma", cfg.noise.yaw_sigma},
        {"vel_sigma", cfg.noise.vel_sigma},
        {"miss_prob", cfg.noise.miss_prob},
        {"fp_rate", cfg.noise.fp_rate},
        {"score",
         {{"slope", cfg.noise.score.slope},
          {"noise_sigma", cfg.noise.score.noise_sigma},
          {"fp_score_min", cfg.noise.score.fp_score_min},
          {"fp_score_max", cfg.noise.score.fp_score_max}}}}},
      {"model",
       {{"dim", cfg.model.dim},
        {"heads", cfg.model.heads},
        {"encoder_layers", cfg.model.encoder_layers},
        {"decoder_layers", cfg.model.decoder_layers},
        {"dropout", cfg.model.dropout},
        {"ffn_multiplier", cfg.model.ffn_multiplier}}},
      {"tracker",
       {{"max_age", t.max_age},
        {"min_affinity", t.min_affinity},
        {"score_decay", t.score_decay},
        {"nms_iou", t.nms_iou},
        {"emit_inactive", t.emit_inactive},
        {"graph",
         {{"neighbor_radius", t.graph.neighbor_radius},
          {"class_radii", t.graph.class_radii},
          {"radius_multiplier", t.graph.radius_multiplier},
          {"fully_connected_assoc", t.graph.fully_connected_assoc}}},
        {"ablation",
         {{"use_hungarian", t.ablation.use_hungarian},
          {"gt_identity_guided", t.ablation.gt_identity_guided},
          {"no_hidden_state", t.ablation.no_hidden_state},
          {"zero_edge_features", t.ablation.zero_edge_features},
          {"fully_connected_assoc", t.ablation.fully_connected_assoc},
          {"no_velocity_head", t.ablation.no_velocity_head},
          {"radius_multiplier", t.ablation.radius_multiplier}}}}},
      {"train",
       {{"clip_length", cfg.train.clip_length},
        {"batch_size", cfg.train.batch_size},
        {"epochs", cfg.train.epochs},
        {"lr", cfg.train.lr},
        {"weight_decay", cfg.train.weight_decay},
        {"focal_alpha", cfg.train.focal_alpha},
        {"focal_gamma", cfg.train.focal_gamma},
        {"lambda_v", cfg.train.lambda_v},
        {"smooth_l1_beta", cfg.train.smooth_l1_beta},
        {"label_min_iou", cfg.train.label_min_iou},
        {"augmentation", cfg.train.augmentation},
        {"augment_drop_prob", cfg.train.augment_drop_prob},
        {"augment_jitter", cfg.train.augment_jitter},
        {"threads", cfg.train.threads}}},
      {"eval",
       {{"match_distance", cfg.eval.match_distance},
        {"recall_samples", cfg.eval.recall_samples},
        {"classes", eval_classes}}},
      {"paths",
       {{"data_dir", cfg.paths.data_dir},
        {"checkpoint", cfg.paths.checkpoint},
        {"output_dir", cfg.paths.output_dir}}},
  };
  return j.dump(2) + "\n";
}

BaselineConfig baseline_config(const RunConfig& cfg) {
  BaselineConfig b;
  b.graph = effective_graph_config(cfg.tracker);
  b.max_age = cfg.tracker.max_age;
  b.nms_iou = cfg.tracker.nms_iou;
  b.frame_period = cfg.scene.frame_period;
  return b;
}

SceneConfig scene_for(const RunConfig& cfg, std::string_view split, int index) {
  SceneConfig s = cfg.scene;
  s.rng_seed = mix(mix(cfg.seed, split_tag(split)), 2 * static_cast<std::uint64_t>(index));
  return s;
}

NoiseConfig noise_for(const RunConfig& cfg, std::string_view split, int index) {
  NoiseConfig n = cfg.noise;
  n.rng_seed = mix(mix(cfg.seed, split_tag(split)), 2 * static_cast<std::uint64_t>(index) + 1);
  return n;
}

}  // namespace motformer
