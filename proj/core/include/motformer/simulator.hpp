#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "motformer/geometry.hpp"

namespace motformer {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MotionModel { kConstantVelocity, kConstantTurnRate };

struct ClassSpec {
  std::string name;
  std::array<double, 3> size_mean{1.0, 1.0, 1.0};  // (w, l, h)
  std::array<double, 3> size_std{0.0, 0.0, 0.0};
  double max_speed = 1.0;                           // m/s
  double min_speed_fraction = 0.1;                  // speeds drawn in [f, 1] * max_speed
  std::array<int, 2> count_range{0, 0};             // initial objects, inclusive
  double ctrv_fraction = 0.0;                       // share of CTRV movers
  double max_turn_rate = 0.0;                       // rad/s, CTRV draws in [-max, max]
};

// Explicitly placed object, used instead of random initial placement.
struct InitialObject {
  int class_id = 0;
  std::array<double, 2> position{0.0, 0.0};
  double heading = 0.0;
  double speed = 0.0;
  MotionModel motion = MotionModel::kConstantVelocity;
  double turn_rate = 0.0;
  std::optional<std::array<double, 3>> size;
};

struct SceneConfig {
  int num_frames = 20;
  double frame_period = 0.5;                               // 2 Hz
  std::array<double, 4> arena{-40.0, 40.0, -40.0, 40.0};   // x_min, x_max, y_min, y_max
  std::vector<ClassSpec> classes;
  double spawn_prob = 0.3;                                 // per class per frame
  double despawn_prob = 0.02;                              // per object per frame
  double min_spawn_spacing = 2.5;                          // meters
  std::vector<InitialObject> initial_objects;
  std::uint64_t rng_seed = 0;
};

struct ScoreModel {
  double slope = 0.5;          // score = clamp(1 - slope * |jitter| + eps, 0, 1)
  double noise_sigma = 0.05;   // eps ~ N(0, noise_sigma)
  double fp_score_min = 0.05;
  double fp_score_max = 0.45;
};

struct NoiseConfig {
  double pos_sigma = 0.3;
  double size_sigma = 0.1;
  double yaw_sigma = 0.1;
  double vel_sigma = 2.5;
  double miss_prob = 0.1;
  double fp_rate = 2.0;
  ScoreModel score;
  std::uint64_t rng_seed = 0;
};

// Per-frame ground truth with persistent identities.
struct GroundTruthScene {
  double frame_period = 0.5;
  std::vector<std::vector<LabeledBox>> frames;
};

using DetectionFrames = std::vector<std::vector<Box3D>>;

/// Three-class preset ("car", "pedestrian", "truck") with 10-30 concurrent
/// objects.
SceneConfig default_scene_config(std::uint64_t seed = 0);
NoiseConfig default_noise_config(std::uint64_t seed = 0);

void validate(const SceneConfig& cfg);
void validate(const NoiseConfig& cfg);

/// Deterministic given cfg.rng_seed. Objects leaving the arena despawn.
GroundTruthScene generate_scene(const SceneConfig& cfg);

/// Drops, jitters and scores ground truth boxes and adds false positives.
/// `classes` supplies class-conditional sizes and speeds for false positives.
DetectionFrames corrupt(const GroundTruthScene& scene, const std::vector<ClassSpec>& classes,
                        const NoiseConfig& noise);

}  // namespace motformer
