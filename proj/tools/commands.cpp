#include "commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "motformer/baselines.hpp"
#include "motformer/checkpoint.hpp"
#include "motformer/io.hpp"
#include "motformer/pipeline.hpp"

namespace motformer::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void echo_config(const fs::path& dir, const RunConfig& cfg) {
  write_text(dir / "effective_config.json", to_json_string(cfg));
}

std::vector<TrainingScene> load_split(const fs::path& dir, const SplitManifest& m) {
  std::vector<TrainingScene> out;
  for (std::size_t i = 0; i < m.scenes.size(); ++i) {
    TrainingScene s;
    s.ground_truth = read_ground_truth(dir / (m.scenes[i] + ".gt.jsonl"), m.class_names,
                                       m.frame_period, m.num_frames[i]);
    s.detections = read_detections(dir / (m.scenes[i] + ".det.jsonl"), m.class_names,
                                   static_cast<int>(s.ground_truth.frames.size()));
    s.ground_truth.frames.resize(s.detections.size());
    out.push_back(std::move(s));
  }
  return out;
}

void check_classes(const SplitManifest& m, const RunConfig& cfg, const fs::path& dir) {
  if (m.class_names != class_names(cfg))
    throw ConfigError(dir.string() + ": split classes differ from the configured class table");
}

void write_split(const fs::path& dir, const std::vector<TrainingScene>& scenes,
                 const std::vector<std::string>& names, double frame_period) {
  SplitManifest m;
  m.frame_period = frame_period;
  m.class_names = names;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string stem = scene_stem(static_cast<int>(i));
    write_detections(dir / (stem + ".det.jsonl"), scenes[i].detections, names);
    write_ground_truth(dir / (stem + ".gt.jsonl"), scenes[i].ground_truth, names);
    m.scenes.push_back(stem);
    m.num_frames.push_back(static_cast<int>(scenes[i].ground_truth.frames.size()));
  }
  write_manifest(dir, m);
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

void write_report(const fs::path& dir, const MetricsReport& report,
                  const std::vector<std::string>& names, const EvalConfig& cfg) {
  write_text(dir / "metrics.json", metrics_report_json(report, names, cfg));
  write_text(dir / "curves.csv", curves_csv(report, names));
  for (const char* m : {"motar", "mota", "motp"})
    write_text(dir / (std::string(m) + ".svg"), curve_svg(report, names, m));
}

RunConfig config_from_checkpoint(const Checkpoint& ck) {
  const json meta = json::parse(ck.metadata);
  if (!meta.contains("run_config")) throw CheckpointError("checkpoint metadata lacks run_config");
  RunConfig cfg = parse_run_config(meta.at("run_config").dump());
  resolve(cfg);
  return cfg;
}

void run_train(RunConfig& cfg, Model& model, const std::vector<TrainingScene>& train_scenes,
               const std::vector<TrainingScene>& eval_scenes, const fs::path& out,
               FitState& state, int eval_every, bool verbose) {
  const auto names = class_names(cfg);
  std::ostringstream log;
  log << "epoch,batch,l_seq,l_a,l_v\n" << std::setprecision(10);
  const std::string meta = json{{"run_config", json::parse(to_json_string(cfg))}}.dump();

  double epoch_loss = 0.0;
  int epoch_batches = 0;
  FitCallbacks cb;
  cb.on_batch = [&](const TrainLogRow& r) {
    log << r.epoch << ',' << r.batch << ',' << r.l_seq << ',' << r.l_a << ',' << r.l_v << '\n';
    epoch_loss += r.l_seq;
    epoch_batches += 1;
  };
  cb.on_epoch_end = [&](int epoch, const FitState& st) {
    std::string line = "[train] epoch " + std::to_string(epoch + 1) + "/" +
                       std::to_string(cfg.train.epochs) +
                       " mean L_seq " + fmt(epoch_batches ? epoch_loss / epoch_batches : 0.0);
    epoch_loss = 0.0;
    epoch_batches = 0;
    if (!out.empty()) {
      save_checkpoint(out / "model.ckpt", model, &st, meta);
      write_text(out / "train_log.csv", log.str());
    }
    const bool last = epoch + 1 == cfg.train.epochs;
    if (!eval_scenes.empty() && eval_every > 0 && ((epoch + 1) % eval_every == 0 || last)) {
      const MetricsReport r =
          evaluate_outputs(track_scenes(model, cfg.tracker, eval_scenes), eval_scenes, cfg.eval);
      line += " eval AMOTA " + fmt(r.amota, 4) + " IDS " + std::to_string(r.ids);
      if (!out.empty()) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%02d.json", epoch + 1);
        write_text(out / "eval" / name, metrics_report_json(r, names, cfg.eval));
      }
    }
    if (verbose) std::fprintf(stderr, "%s\n", line.c_str());
  };
  fit(model, train_scenes, cfg.tracker, cfg.train, state, cb);
  if (!out.empty()) {
    save_checkpoint(out / "model.ckpt", model, &state, meta);
    write_text(out / "train_log.csv", log.str());
  }
}

}  // namespace

RunConfig load_config(const std::optional<std::string>& path) {
  RunConfig cfg = path ? load_run_config(*path) : default_run_config();
  if (const char* s = std::getenv("MOTFORMER_SEED")) {
    try {
      cfg.seed = std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string("MOTFORMER_SEED is not an unsigned integer: ") + s);
    }
  }
  if (const char* t = std::getenv("MOTFORMER_THREADS")) {
    try {
      cfg.train.threads = std::stoi(t);
    } catch (const std::exception&) {
      throw ConfigError(std::string("MOTFORMER_THREADS is not an integer: ") + t);
    }
  }
  return cfg;
}

void apply(const TrainOverrides& o, RunConfig& cfg) {
  if (o.clip_len) cfg.train.clip_length = *o.clip_len;
  if (o.max_age) cfg.tracker.max_age = *o.max_age;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.layers) {
    int le = 0, ld = 0;
    char sep = 0;
    std::istringstream in(*o.layers);
    if (!(in >> le >> sep >> ld) || sep != ',' || !in.eof())
      throw UsageError("--layers expects L_e,L_d (e.g. 1,3), got '" + *o.layers + "'");
    cfg.model.encoder_layers = le;
    cfg.model.decoder_layers = ld;
  }
  if (o.dim) cfg.model.dim = *o.dim;
  if (o.heads) cfg.model.heads = *o.heads;
  if (o.radius_mult) cfg.tracker.ablation.radius_multiplier = *o.radius_mult;
  if (o.lambda_v) cfg.train.lambda_v = *o.lambda_v;
  if (o.hungarian) cfg.tracker.ablation.use_hungarian = true;
  if (o.gt_guided) cfg.tracker.ablation.gt_identity_guided = true;
  if (o.no_hidden_state) cfg.tracker.ablation.no_hidden_state = true;
  if (o.zero_edge_features) cfg.tracker.ablation.zero_edge_features = true;
  if (o.fully_connected) cfg.tracker.ablation.fully_connected_assoc = true;
}

void simulate(RunConfig cfg, const fs::path& out) {
  resolve(cfg);
  validate(cfg);
  const auto names = class_names(cfg);
  write_split(out / "train", generate_split(cfg, "train", cfg.train_scenes), names, cfg.scene.frame_period);
  write_split(out / "eval", generate_split(cfg, "eval", cfg.eval_scenes), names, cfg.scene.frame_period);
  echo_config(out, cfg);
}

void train(RunConfig cfg, const TrainOptions& opts) {
  resolve(cfg);
  validate(cfg);
  const fs::path train_dir = opts.data / "train";
  const SplitManifest tm = read_manifest(train_dir);
  check_classes(tm, cfg, train_dir);
  const auto train_scenes = load_split(train_dir, tm);
  std::vector<TrainingScene> eval_scenes;
  const fs::path eval_dir = opts.data / "eval";
  if (fs::exists(eval_dir / "manifest.json")) {
    const SplitManifest em = read_manifest(eval_dir);
    check_classes(em, cfg, eval_dir);
    eval_scenes = load_split(eval_dir, em);
  }

  Model model = make_model(cfg);
  FitState state;
  if (opts.resume) {
    const Checkpoint ck = read_checkpoint(*opts.resume);
    load_parameters(model, ck);
    if (!ck.fit_state) throw CheckpointError(opts.resume->string() + " has no optimizer state to resume from");
    state = *ck.fit_state;
  }
  fs::create_directories(opts.out);
  echo_config(opts.out, cfg);
  run_train(cfg, model, train_scenes, eval_scenes, opts.out, state, opts.eval_every, opts.verbose);
}

void track(const TrackOptions& opts) {
  RunConfig cfg;
  std::optional<Model> model;
  if (opts.checkpoint) {
    const Checkpoint ck = read_checkpoint(*opts.checkpoint);
    cfg = config_from_checkpoint(ck);
    if (opts.config) {
      RunConfig user = load_config(*opts.config);
      resolve(user);
      cfg.tracker = user.tracker;
      cfg.eval = user.eval;
    }
    model.emplace(ck.model_config, 0);
    load_parameters(*model, ck);
  } else {
    cfg = load_config(opts.config);
    resolve(cfg);
  }
  validate(cfg);
  const auto names = class_names(cfg);

  auto run = [&](const DetectionFrames& frames) {
    if (model) return Tracker(*model, cfg.tracker).run_sequence(frames);
    return cv_greedy_track(frames, baseline_config(cfg));
  };

  if (fs::is_directory(opts.detections)) {
    const SplitManifest m = read_manifest(opts.detections);
    check_classes(m, cfg, opts.detections);
    fs::create_directories(opts.out);
    for (std::size_t i = 0; i < m.scenes.size(); ++i) {
      const auto frames =
          read_detections(opts.detections / (m.scenes[i] + ".det.jsonl"), names, m.num_frames[i]);
      write_tracking(opts.out / (m.scenes[i] + ".track.jsonl"), run(frames), names);
    }
    echo_config(opts.out, cfg);
  } else {
    const auto frames = read_detections(opts.detections, names);
    write_tracking(opts.out, run(frames), names);
    const fs::path parent = opts.out.has_parent_path() ? opts.out.parent_path() : fs::path(".");
    echo_config(parent, cfg);
  }
}

MetricsReport eval(const EvalOptions& opts) {
  RunConfig cfg = load_config(opts.config);
  resolve(cfg);
  validate(cfg);
  std::vector<EvalSequence> seqs;
  std::vector<std::string> names = class_names(cfg);
  if (fs::is_directory(opts.gt)) {
    const SplitManifest m = read_manifest(opts.gt);
    names = m.class_names;
    if (!fs::is_directory(opts.tracking))
      throw UsageError("--gt is a split directory, so --tracking must be a directory too");
    for (std::size_t i = 0; i < m.scenes.size(); ++i) {
      EvalSequence s;
      s.ground_truth =
          read_ground_truth(opts.gt / (m.scenes[i] + ".gt.jsonl"), names, m.frame_period, m.num_frames[i]).frames;
      const fs::path tf = opts.tracking / (m.scenes[i] + ".track.jsonl");
      if (!fs::exists(tf)) throw IoError("missing tracking output " + tf.string());
      s.predictions = read_tracking(tf, names, static_cast<int>(s.ground_truth.size()));
      if (s.predictions.size() > s.ground_truth.size())
        throw IoError(tf.string() + ": frames beyond the ground truth");
      seqs.push_back(std::move(s));
    }
  } else {
    EvalSequence s;
    s.ground_truth = read_ground_truth(opts.gt, names, cfg.scene.frame_period).frames;
    s.predictions = read_tracking(opts.tracking, names, static_cast<int>(s.ground_truth.size()));
    s.ground_truth.resize(std::max(s.ground_truth.size(), s.predictions.size()));
    seqs.push_back(std::move(s));
  }
  for (int c : cfg.eval.classes)
    if (c >= static_cast<int>(names.size())) throw ConfigError("eval.classes: class id out of range");
  const MetricsReport report = evaluate(seqs, cfg.eval);
  fs::create_directories(opts.out);
  write_report(opts.out, report, names, cfg.eval);
  echo_config(opts.out, cfg);
  return report;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "variant,seed,amota,amotp,mota,ids,frag\n";
  for (const AblationRow& r : rows)
    out << r.variant << ',' << r.seed << ',' << r.amota << ',' << r.amotp << ',' << r.mota << ','
        << r.ids << ',' << r.frag << '\n';
  return out.str();
}

std::vector<AblationRow> ablate(const fs::path& grid_path, const std::optional<fs::path>& out_override,
                                bool verbose) {
  json grid;
  try {
    grid = json::parse(read_text(grid_path), nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(grid_path.string() + ": " + e.what());
  }
  if (!grid.is_object()) throw ConfigError(grid_path.string() + ": expected an object");
  static const std::set<std::string> known{"base", "seeds", "data", "out", "variants", "eval_every"};
  for (const auto& [k, _] : grid.items())
    if (!known.count(k)) throw ConfigError(grid_path.string() + ": " + k + ": unknown key");

  const fs::path root = grid_path.has_parent_path() ? grid_path.parent_path() : fs::path(".");
  json base = json::parse(to_json_string(default_run_config()));
  base["tracker"]["graph"]["class_radii"] = json::array();
  if (grid.contains("base")) {
    const json& b = grid.at("base");
    if (b.is_string()) {
      const fs::path p = root / b.get<std::string>();
      RunConfig loaded = load_run_config(p.string());
      base = json::parse(to_json_string(loaded));
    } else {
      base.merge_patch(b);
    }
  }
  std::vector<std::uint64_t> seeds{0};
  if (grid.contains("seeds")) seeds = grid.at("seeds").get<std::vector<std::uint64_t>>();
  if (!grid.contains("variants") || !grid.at("variants").is_array() || grid.at("variants").empty())
    throw ConfigError(grid_path.string() + ": variants must be a non-empty array");
  const int eval_every = grid.value("eval_every", 0);
  std::optional<fs::path> data;
  if (grid.contains("data")) data = root / grid.at("data").get<std::string>();
  std::optional<fs::path> out = out_override;
  if (!out && grid.contains("out")) out = root / grid.at("out").get<std::string>();

  std::vector<AblationRow> rows;
  for (const json& v : grid.at("variants")) {
    for (const auto& [k, _] : v.items())
      if (k != "name" && k != "set") throw ConfigError("variant key " + k + ": unknown key");
    const std::string name = v.at("name").get<std::string>();
    for (std::uint64_t seed : seeds) {
      json merged = base;
      if (v.contains("set")) merged.merge_patch(v.at("set"));
      merged["seed"] = seed;
      RunConfig cfg;
      try {
        cfg = parse_run_config(merged.dump());
      } catch (const ConfigError& e) {
        throw ConfigError("variant " + name + ": " + e.what());
      }
      resolve(cfg);
      validate(cfg);

      std::vector<TrainingScene> train_scenes, eval_scenes;
      if (data) {
        const SplitManifest tm = read_manifest(*data / "train");
        const SplitManifest em = read_manifest(*data / "eval");
        check_classes(tm, cfg, *data / "train");
        train_scenes = load_split(*data / "train", tm);
        eval_scenes = load_split(*data / "eval", em);
      } else {
        train_scenes = generate_split(cfg, "train", cfg.train_scenes);
        eval_scenes = generate_split(cfg, "eval", cfg.eval_scenes);
      }
      fs::path run_dir;
      if (out) run_dir = *out / name / ("seed_" + std::to_string(seed));
      if (!run_dir.empty()) {
        fs::create_directories(run_dir);
        echo_config(run_dir, cfg);
      }
      if (verbose) std::fprintf(stderr, "[ablate] %s seed %llu\n", name.c_str(), static_cast<unsigned long long>(seed));
      Model model = make_model(cfg);
      FitState state;
      run_train(cfg, model, train_scenes, eval_scenes, run_dir, state, eval_every, verbose);
      const MetricsReport r =
          evaluate_outputs(track_scenes(model, cfg.tracker, eval_scenes), eval_scenes, cfg.eval);
      if (!run_dir.empty()) write_report(run_dir, r, class_names(cfg), cfg.eval);
      rows.push_back({name, seed, r.amota, r.amotp, r.mota, r.ids, r.frag});
      if (verbose)
        std::fprintf(stderr, "[ablate] %s seed %llu AMOTA %.4f IDS %ld\n", name.c_str(),
                     static_cast<unsigned long long>(seed), r.amota, r.ids);
      if (out) write_text(*out / "ablation.csv", ablation_csv(rows));
    }
  }
  return rows;
}

}  // namespace motformer::cli
