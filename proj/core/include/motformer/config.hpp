#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "motformer/baselines.hpp"
#include "motformer/metrics.hpp"
#include "motformer/model.hpp"
#include "motformer/simulator.hpp"
#include "motformer/tracker.hpp"
#include "motformer/training.hpp"

namespace motformer {

struct PathsConfig {
  std::string data_dir;
  std::string checkpoint;
  std::string output_dir;
};

// Everything a command needs. Loaded from a JSON file that may contain
// comments; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  int train_scenes = 200;
  int eval_scenes = 50;
  SceneConfig scene;
  NoiseConfig noise;
  ModelConfig model;
  TrackerConfig tracker;
  TrainConfig train;
  EvalConfig eval;
  PathsConfig paths;
};

/// Defaults: the three-class simulator preset and the paper hyperparameters.
RunConfig default_run_config();

/// Parses `text` on top of default_run_config(). Throws ConfigError naming
/// the offending key.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);

/// Fills derived fields: class radii from the class table when empty, the
/// tracker frame period from the scene, the model class count, and seeds.
void resolve(RunConfig& cfg);

void validate(const RunConfig& cfg);

/// Pretty-printed JSON that parse_run_config reads back unchanged.
std::string to_json_string(const RunConfig& cfg);

BaselineConfig baseline_config(const RunConfig& cfg);

/// Seeds for scene `index` of a split ("train" or "eval").
SceneConfig scene_for(const RunConfig& cfg, std::string_view split, int index);
NoiseConfig noise_for(const RunConfig& cfg, std::string_view split, int index);

}  // namespace motformer
