#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "motformer/config.hpp"
#include "motformer/metrics.hpp"

namespace motformer::cli {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Default config, or the file at `path`, with MOTFORMER_SEED and
/// MOTFORMER_THREADS applied.
RunConfig load_config(const std::optional<std::string>& path);

// Training switches mirroring the ablation tables.
struct TrainOverrides {
  std::optional<int> clip_len;
  std::optional<int> max_age;
  std::optional<int> epochs;
  std::optional<std::string> layers;   // "L_e,L_d"
  std::optional<int> dim;
  std::optional<int> heads;
  std::optional<double> radius_mult;
  std::optional<double> lambda_v;
  bool hungarian = false;
  bool gt_guided = false;
  bool no_hidden_state = false;
  bool zero_edge_features = false;
  bool fully_connected = false;
};

void apply(const TrainOverrides& o, RunConfig& cfg);

/// Writes <out>/train and <out>/eval splits plus effective_config.json.
void simulate(RunConfig cfg, const std::filesystem::path& out);

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<std::filesystem::path> resume;
  int eval_every = 1;   // epochs between eval snapshots; 0 disables
  bool verbose = true;
};

/// Trains on <data>/train, snapshots metrics on <data>/eval when present.
/// Writes model.ckpt, train_log.csv, eval/epoch_NN.json, effective_config.json.
void train(RunConfig cfg, const TrainOptions& opts);

struct TrackOptions {
  std::optional<std::filesystem::path> checkpoint;   // unset: baseline tracker
  std::filesystem::path detections;                  // split dir or .jsonl file
  std::filesystem::path out;                         // dir for a split, file otherwise
  std::optional<std::string> config;                 // overrides checkpoint settings
};

void track(const TrackOptions& opts);

struct EvalOptions {
  std::filesystem::path tracking;   // dir of scene_NNNN.track.jsonl or one file
  std::filesystem::path gt;         // split dir or one .gt.jsonl file
  std::filesystem::path out;
  std::optional<std::string> config;
};

MetricsReport eval(const EvalOptions& opts);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double amota = 0.0;
  double amotp = 0.0;
  double mota = 0.0;
  long ids = 0;
  long frag = 0;
};

/// Runs every (variant, seed) of the grid file and writes <out>/ablation.csv.
std::vector<AblationRow> ablate(const std::filesystem::path& grid,
                                const std::optional<std::filesystem::path>& out, bool verbose);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace motformer::cli
