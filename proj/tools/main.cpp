#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "motformer/checkpoint.hpp"
#include "motformer/io.hpp"

namespace cli = motformer::cli;

namespace {

int fail(const char* kind, const std::string& msg, int code) {
  std::string flat = msg;
  for (char& c : flat)
    if (c == '\n' || c == '\r') c = ' ';
  std::fprintf(stderr, "motformer-error: %s: %s\n", kind, flat.c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online 3D multi-object tracking with a learned graph transformer"};
  app.require_subcommand(1);

  std::optional<std::string> config;
  std::string out, data, checkpoint, detections, tracking, gt, grid;
  std::optional<std::string> resume;
  std::optional<std::uint64_t> seed;
  int eval_every = 1;
  bool baseline = false, quiet = false;
  cli::TrainOverrides ov;

  auto* sim = app.add_subcommand("simulate", "Generate synthetic train/eval scenes and detections");
  sim->add_option("--config", config, "Run config (JSON, comments allowed)");
  sim->add_option("--out", out, "Output directory")->required();
  sim->add_option("--seed", seed, "Global seed");

  auto* tr = app.add_subcommand("train", "Train the tracker online on a simulated split");
  tr->add_option("--config", config, "Run config");
  tr->add_option("--data", data, "Directory holding train/ (and optionally eval/)")->required();
  tr->add_option("--out", out, "Output directory")->required();
  tr->add_option("--seed", seed, "Global seed");
  tr->add_option("--resume", resume, "Checkpoint with optimizer state to continue from");
  tr->add_option("--eval-every", eval_every, "Epochs between eval snapshots (0 disables)");
  tr->add_option("--clip-len", ov.clip_len, "Training clip length T");
  tr->add_option("--max-age", ov.max_age, "Maximum unmatched track age T_d");
  tr->add_option("--epochs", ov.epochs, "Training epochs");
  tr->add_option("--layers", ov.layers, "Encoder and decoder layer counts as L_e,L_d");
  tr->add_option("--dim", ov.dim, "Feature dimension d");
  tr->add_option("--heads", ov.heads, "Attention heads C");
  tr->add_option("--radius-mult", ov.radius_mult, "Association radius multiplier");
  tr->add_option("--lambda-v", ov.lambda_v, "Velocity loss weight");
  tr->add_flag("--hungarian", ov.hungarian, "Hungarian instead of greedy track matching");
  tr->add_flag("--gt-guided", ov.gt_guided, "Match with ground-truth identities during training");
  tr->add_flag("--no-hidden-state", ov.no_hidden_state, "Re-embed track boxes instead of carrying features");
  tr->add_flag("--zero-edge-features", ov.zero_edge_features, "Zero the association edge features");
  tr->add_flag("--fully-connected", ov.fully_connected, "Disable distance gating of association edges");
  tr->add_flag("--quiet", quiet, "No progress output");

  auto* tk = app.add_subcommand("track", "Run a tracker over detections");
  tk->add_option("--checkpoint", checkpoint, "Trained model");
  tk->add_option("--detections", detections, "Split directory or detection .jsonl file")->required();
  tk->add_option("--out", out, "Output directory (split) or .jsonl file")->required();
  tk->add_option("--config", config, "Override tracker settings");
  tk->add_flag("--baseline", baseline, "Use the constant-velocity greedy baseline");

  auto* ev = app.add_subcommand("eval", "Score tracking output against ground truth");
  ev->add_option("--tracking", tracking, "Tracking directory or .jsonl file")->required();
  ev->add_option("--gt", gt, "Split directory or ground-truth .jsonl file")->required();
  ev->add_option("--out", out, "Output directory")->required();
  ev->add_option("--config", config, "Run config (eval section)");

  auto* ab = app.add_subcommand("ablate", "Train and evaluate a grid of variants");
  ab->add_option("--grid", grid, "Grid file")->required();
  ab->add_option("--out", out, "Output directory (overrides the grid's)");
  ab->add_flag("--quiet", quiet, "No progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*sim) {
      auto cfg = cli::load_config(config);
      if (seed) cfg.seed = *seed;
      cli::simulate(cfg, out);
    } else if (*tr) {
      auto cfg = cli::load_config(config);
      if (seed) cfg.seed = *seed;
      cli::apply(ov, cfg);
      cli::TrainOptions o;
      o.data = data;
      o.out = out;
      if (resume) o.resume = *resume;
      o.eval_every = eval_every;
      o.verbose = !quiet;
      cli::train(cfg, o);
    } else if (*tk) {
      if (baseline == !checkpoint.empty())
        return fail("usage", "track needs exactly one of --checkpoint or --baseline", 2);
      cli::TrackOptions o;
      if (!checkpoint.empty()) o.checkpoint = checkpoint;
      o.detections = detections;
      o.out = out;
      o.config = config;
      cli::track(o);
    } else if (*ev) {
      cli::EvalOptions o{tracking, gt, out, config};
      const auto r = cli::eval(o);
      std::printf("AMOTA %.4f AMOTP %.4f MOTA %.4f IDS %ld FRAG %ld\n", r.amota, r.amotp, r.mota, r.ids, r.frag);
    } else if (*ab) {
      std::optional<std::filesystem::path> o;
      if (!out.empty()) o = out;
      const auto rows = cli::ablate(grid, o, !quiet);
      std::fputs(cli::ablation_csv(rows).c_str(), stdout);
    }
  } catch (const cli::UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const motformer::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const motformer::IoError& e) {
    return fail("io", e.what(), 1);
  } catch (const motformer::CheckpointError& e) {
    return fail("checkpoint", e.what(), 1);
  } catch (const motformer::TrainingError& e) {
    return fail("training", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
