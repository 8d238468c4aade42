#include "motformer/simulator.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <random>

namespace motformer {
namespace {

struct Mover {
  int gt_id = 0;
  int class_id = 0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double turn_rate = 0.0;
  MotionModel motion = MotionModel::kConstantVelocity;
  std::array<double, 3> size{1.0, 1.0, 1.0};
};

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  int poisson(double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<int>(mean)(rng_);
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

bool inside(const std::array<double, 4>& arena, double x, double y) {
  return x >= arena[0] && x <= arena[1] && y >= arena[2] && y <= arena[3];
}

std::array<double, 3> sample_size(Sampler& s, const ClassSpec& c) {
  std::array<double, 3> out{};
  for (int k = 0; k < 3; ++k)
    out[k] = std::max(0.25 * c.size_mean[k], c.size_mean[k] + c.size_std[k] * s.normal());
  return out;
}

Mover spawn_random(Sampler& s, const SceneConfig& cfg, int class_id,
                   const std::vector<Mover>& alive) {
  const ClassSpec& c = cfg.classes[class_id];
  Mover m;
  m.class_id = class_id;
  // A bounded number of placement attempts; the last one is accepted.
  for (int attempt = 0; attempt < 20; ++attempt) {
    m.x = s.uniform(cfg.arena[0], cfg.arena[1]);
    m.y = s.uniform(cfg.arena[2], cfg.arena[3]);
    const bool clear = std::none_of(alive.begin(), alive.end(), [&](const Mover& o) {
      return std::hypot(o.x - m.x, o.y - m.y) < cfg.min_spawn_spacing;
    });
    if (clear) break;
  }
  m.heading = s.uniform(-kPi, kPi);
  m.speed = s.uniform(c.min_speed_fraction, 1.0) * c.max_speed;
  const bool ctrv = s.uniform(0.0, 1.0) < c.ctrv_fraction;
  const double turn = s.uniform(-c.max_turn_rate, c.max_turn_rate);
  m.motion = ctrv ? MotionModel::kConstantTurnRate : MotionModel::kConstantVelocity;
  m.turn_rate = ctrv ? turn : 0.0;
  m.size = sample_size(s, c);
  return m;
}

void advance(Mover& m, double dt) {
  if (m.motion == MotionModel::kConstantTurnRate && std::abs(m.turn_rate) > 1e-12) {
    const double h1 = m.heading + m.turn_rate * dt;
    const double r = m.speed / m.turn_rate;
    m.x += r * (std::sin(h1) - std::sin(m.heading));
    m.y += r * (std::cos(m.heading) - std::cos(h1));
    m.heading = h1;
  } else {
    m.x += m.speed * std::cos(m.heading) * dt;
    m.y += m.speed * std::sin(m.heading) * dt;
  }
}

LabeledBox to_box(const Mover& m, int frame, double period) {
  LabeledBox lb;
  lb.id = m.gt_id;
  Box3D& b = lb.box;
  b.center = {m.x, m.y, 0.5 * m.size[2]};
  b.size = m.size;
  b.yaw = normalize_yaw(m.heading);
  b.velocity = {m.speed * std::cos(m.heading), m.speed * std::sin(m.heading)};
  b.class_id = m.class_id;
  b.score = 1.0;
  b.frame = frame;
  b.timestamp = frame * period;
  return lb;
}

}  // namespace

SceneConfig default_scene_config(std::uint64_t seed) {
  SceneConfig cfg;
  cfg.num_frames = 20;
  cfg.frame_period = 0.5;
  cfg.arena = {-30.0, 30.0, -30.0, 30.0};
  cfg.spawn_prob = 0.35;
  cfg.despawn_prob = 0.02;
  cfg.min_spawn_spacing = 2.5;
  cfg.rng_seed = seed;

  ClassSpec car;
  car.name = "car";
  car.size_mean = {1.9, 4.5, 1.6};
  car.size_std = {0.1, 0.3, 0.1};
  car.max_speed = 10.0;
  car.count_range = {5, 10};
  car.ctrv_fraction = 0.5;
  car.max_turn_rate = 0.4;

  ClassSpec ped;
  ped.name = "pedestrian";
  ped.size_mean = {0.8, 0.8, 1.75};
  ped.size_std = {0.08, 0.08, 0.1};
  ped.max_speed = 2.0;
  ped.count_range = {5, 14};
  ped.ctrv_fraction = 0.6;
  ped.max_turn_rate = 0.8;

  ClassSpec truck;
  truck.name = "truck";
  truck.size_mean = {2.5, 8.0, 3.2};
  truck.size_std = {0.15, 0.8, 0.2};
  truck.max_speed = 8.0;
  truck.count_range = {0, 3};
  truck.ctrv_fraction = 0.3;
  truck.max_turn_rate = 0.25;

  cfg.classes = {car, ped, truck};
  return cfg;
}

NoiseConfig default_noise_config(std::uint64_t seed) {
  NoiseConfig n;
  n.rng_seed = seed;
  return n;
}

void validate(const SceneConfig& cfg) {
  if (cfg.num_frames < 2) throw ConfigError("scene.num_frames must be >= 2");
  if (!(cfg.frame_period > 0.0)) throw ConfigError("scene.frame_period must be > 0");
  if (!(cfg.arena[0] < cfg.arena[1] && cfg.arena[2] < cfg.arena[3]))
    throw ConfigError("scene.arena must satisfy x_min < x_max and y_min < y_max");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(cfg.spawn_prob)) throw ConfigError("scene.spawn_prob must be in [0, 1]");
  if (!prob(cfg.despawn_prob)) throw ConfigError("scene.despawn_prob must be in [0, 1]");
  if (cfg.classes.empty()) throw ConfigError("scene.classes must not be empty");
  for (const ClassSpec& c : cfg.classes) {
    if (!(c.max_speed > 0.0)) throw ConfigError("class '" + c.name + "': max_speed must be > 0");
    if (!prob(c.ctrv_fraction)) throw ConfigError("class '" + c.name + "': ctrv_fraction must be in [0, 1]");
    if (!prob(c.min_speed_fraction))
      throw ConfigError("class '" + c.name + "': min_speed_fraction must be in [0, 1]");
    if (c.count_range[0] < 0 || c.count_range[0] > c.count_range[1])
      throw ConfigError("class '" + c.name + "': count_range must satisfy 0 <= min <= max");
    for (int k = 0; k < 3; ++k) {
      if (!(c.size_mean[k] > 0.0)) throw ConfigError("class '" + c.name + "': size_mean must be > 0");
      if (c.size_std[k] < 0.0) throw ConfigError("class '" + c.name + "': size_std must be >= 0");
    }
  }
  for (const InitialObject& o : cfg.initial_objects) {
    if (o.class_id < 0 || o.class_id >= static_cast<int>(cfg.classes.size()))
      throw ConfigError("initial object has an unknown class id");
    if (o.speed < 0.0 || o.speed > cfg.classes[o.class_id].max_speed)
      throw ConfigError("initial object speed must be within [0, max_speed]");
  }
}

void validate(const NoiseConfig& n) {
  if (n.pos_sigma < 0.0 || n.size_sigma < 0.0 || n.yaw_sigma < 0.0 || n.vel_sigma < 0.0 ||
      n.score.noise_sigma < 0.0)
    throw ConfigError("noise sigmas must be >= 0");
  if (!(n.miss_prob >= 0.0 && n.miss_prob <= 1.0)) throw ConfigError("noise.miss_prob must be in [0, 1]");
  if (n.fp_rate < 0.0) throw ConfigError("noise.fp_rate must be >= 0");
  if (!(n.score.fp_score_min >= 0.0 && n.score.fp_score_min <= n.score.fp_score_max &&
        n.score.fp_score_max <= 1.0))
    throw ConfigError("noise.score false-positive range must satisfy 0 <= min <= max <= 1");
}

GroundTruthScene generate_scene(const SceneConfig& cfg) {
  validate(cfg);
  Sampler s(cfg.rng_seed);
  GroundTruthScene scene;
  scene.frame_period = cfg.frame_period;
  int next_id = 0;
  std::vector<Mover> alive;

  if (!cfg.initial_objects.empty()) {
    for (const InitialObject& o : cfg.initial_objects) {
      Mover m;
      m.gt_id = next_id++;
      m.class_id = o.class_id;
      m.x = o.position[0];
      m.y = o.position[1];
      m.heading = o.heading;
      m.speed = o.speed;
      m.motion = o.motion;
      m.turn_rate = o.motion == MotionModel::kConstantTurnRate ? o.turn_rate : 0.0;
      m.size = o.size.value_or(cfg.classes[o.class_id].size_mean);
      alive.push_back(m);
    }
  } else {
    for (int c = 0; c < static_cast<int>(cfg.classes.size()); ++c) {
      const int n = s.uniform_int(cfg.classes[c].count_range[0], cfg.classes[c].count_range[1]);
      for (int k = 0; k < n; ++k) {
        Mover m = spawn_random(s, cfg, c, alive);
        m.gt_id = next_id++;
        alive.push_back(m);
      }
    }
  }

  for (int f = 0; f < cfg.num_frames; ++f) {
    if (f > 0) {
      std::vector<Mover> next;
      for (Mover m : alive) {
        advance(m, cfg.frame_period);
        const bool leave = s.uniform(0.0, 1.0) < cfg.despawn_prob;
        if (!leave && inside(cfg.arena, m.x, m.y)) next.push_back(m);
      }
      alive = std::move(next);
      for (int c = 0; c < static_cast<int>(cfg.classes.size()); ++c) {
        if (s.uniform(0.0, 1.0) < cfg.spawn_prob) {
          Mover m = spawn_random(s, cfg, c, alive);
          m.gt_id = next_id++;
          alive.push_back(m);
        }
      }
    }
    std::vector<LabeledBox> boxes;
    boxes.reserve(alive.size());
    for (const Mover& m : alive) boxes.push_back(to_box(m, f, cfg.frame_period));
    scene.frames.push_back(std::move(boxes));
  }
  return scene;
}

DetectionFrames corrupt(const GroundTruthScene& scene, const std::vector<ClassSpec>& classes,
                        const NoiseConfig& noise) {
  validate(noise);
  if (classes.empty()) throw ConfigError("corrupt requires a non-empty class table");
  Sampler s(noise.rng_seed);
  DetectionFrames out;
  out.reserve(scene.frames.size());
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    const int frame = static_cast<int>(f);
    const double ts = frame * scene.frame_period;
    std::vector<Box3D> dets;
    for (const LabeledBox& gt : scene.frames[f]) {
      if (s.uniform(0.0, 1.0) < noise.miss_prob) continue;
      Box3D d = gt.box;
      const double dx = noise.pos_sigma * s.normal();
      const double dy = noise.pos_sigma * s.normal();
      const double dz = noise.pos_sigma * s.normal();
      d.center = {d.center[0] + dx, d.center[1] + dy, d.center[2] + dz};
      for (int k = 0; k < 3; ++k)
        d.size[k] = std::max(0.05, d.size[k] + noise.size_sigma * s.normal());
      d.yaw = normalize_yaw(d.yaw + noise.yaw_sigma * s.normal());
      d.velocity[0] += noise.vel_sigma * s.normal();
      d.velocity[1] += noise.vel_sigma * s.normal();
      const double jitter = std::sqrt(dx * dx + dy * dy + dz * dz);
      const double eps = noise.score.noise_sigma * s.normal();
      d.score = std::clamp(1.0 - noise.score.slope * jitter + eps, 0.0, 1.0);
      d.frame = frame;
      d.timestamp = ts;
      dets.push_back(d);
    }
    const int n_fp = s.poisson(noise.fp_rate);
    for (int k = 0; k < n_fp; ++k) {
      const int c = s.uniform_int(0, static_cast<int>(classes.size()) - 1);
      Box3D d;
      d.class_id = c;
      d.size = sample_size(s, classes[c]);
      // False positives land near the region covered by the frame's objects.
      double x_lo = -10.0, x_hi = 10.0, y_lo = -10.0, y_hi = 10.0;
      if (!scene.frames[f].empty()) {
        x_lo = y_lo = std::numeric_limits<double>::infinity();
        x_hi = y_hi = -std::numeric_limits<double>::infinity();
        for (const LabeledBox& gt : scene.frames[f]) {
          x_lo = std::min(x_lo, gt.box.center[0]);
          x_hi = std::max(x_hi, gt.box.center[0]);
          y_lo = std::min(y_lo, gt.box.center[1]);
          y_hi = std::max(y_hi, gt.box.center[1]);
        }
      }
      d.center = {s.uniform(x_lo, x_hi), s.uniform(y_lo, y_hi), 0.5 * d.size[2]};
      d.yaw = normalize_yaw(s.uniform(-kPi, kPi));
      const double speed = s.uniform(0.0, classes[c].max_speed);
      const double dir = s.uniform(-kPi, kPi);
      d.velocity = {speed * std::cos(dir), speed * std::sin(dir)};
      d.score = s.uniform(noise.score.fp_score_min, noise.score.fp_score_max);
      d.frame = frame;
      d.timestamp = ts;
      dets.push_back(d);
    }
    std::shuffle(dets.begin(), dets.end(), s.engine());
    out.push_back(std::move(dets));
  }
  return out;
}

}  // namespace motformer
