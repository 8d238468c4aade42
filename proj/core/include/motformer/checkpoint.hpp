#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "motformer/autodiff.hpp"
#include "motformer/model.hpp"
#include "motformer/training.hpp"

namespace motformer {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointFormatVersion = 1;

// File layout: 8-byte little-endian header length, a JSON header
// {format_version, model_config, parameters: [{name, shape, offset}],
// optimizer, metadata}, then the little-endian float64 payload. Offsets count
// doubles from the start of the payload.
struct Checkpoint {
  ModelConfig model_config;
  std::map<std::string, ad::Matrix> parameters;
  std::vector<std::string> order;        // parameter names in file order
  std::optional<FitState> fit_state;     // Adam moments for resuming
  std::string metadata;                  // free-form JSON text
};

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const FitState* fit_state = nullptr, const std::string& metadata = "{}");

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies parameter values into `model`. Names and shapes must match exactly.
void load_parameters(Model& model, const Checkpoint& ckpt);

}  // namespace motformer
