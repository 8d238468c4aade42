#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "motformer/autodiff.hpp"
#include "motformer/graph.hpp"

namespace motformer {

struct ModelConfig {
  int dim = 128;
  int heads = 8;
  int encoder_layers = 1;
  int decoder_layers = 3;
  double dropout = 0.1;
  int ffn_multiplier = 2;
  int num_classes = 3;

  int head_dim() const { return dim / heads; }
  bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& cfg);

struct DecodeOutput {
  ad::Tensor detections;                     // h_D after the last layer, N_D x d
  ad::Tensor edges;                          // h_A after the last layer, E_A x d
  std::vector<ad::Tensor> cross_attention;   // per layer, E_A x C
};

// Graph transformer for track/detection association.
//
// Every block is pre-LayerNorm with a residual connection. Attention logits
// are scaled by 1/sqrt(d/C). The decoder's cross-attention adds a learned
// per-head scalar projection of the edge feature to each logit, and the edge
// features are updated from the concatenated per-head logits.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  ad::Tensor embed_detections(ad::Tape& tape, const ad::Tensor& raw);
  ad::Tensor embed_edges(ad::Tape& tape, const ad::Tensor& raw);

  // Self-attention over the track graph; returns the input for an empty set.
  ad::Tensor encode_tracks(ad::Tape& tape, const ad::Tensor& tracks, const SparseGraph& track_graph);

  // `assoc_graph` edges run track (src) -> detection (dst).
  DecodeOutput decode(ad::Tape& tape, const ad::Tensor& detections,
                      const SparseGraph& detection_graph, const ad::Tensor& tracks,
                      const SparseGraph& assoc_graph, const ad::Tensor& edges);

  // Per-edge logits (E x 1); affinity = sigmoid(logit).
  ad::Tensor affinity_logits(ad::Tape& tape, const ad::Tensor& edges);
  // Per-detection (vx, vy), N x 2.
  ad::Tensor velocity(ad::Tape& tape, const ad::Tensor& detections);

  int detection_input_dim() const { return detection_feature_dim(cfg_.num_classes); }

 private:
  struct AttentionResult {
    ad::Tensor output;
    ad::Tensor logits;
    ad::Tensor weights;
  };

  ad::Tensor p(ad::Tape& tape, const std::string& name);
  ad::Tensor mlp(ad::Tape& tape, const std::string& prefix, const ad::Tensor& x);
  ad::Tensor norm(ad::Tape& tape, const std::string& prefix, const ad::Tensor& x);
  ad::Tensor ffn(ad::Tape& tape, const std::string& prefix, const ad::Tensor& x);
  ad::Tensor drop(ad::Tape& tape, const ad::Tensor& x);
  AttentionResult attend(ad::Tape& tape, const std::string& prefix, const ad::Tensor& query,
                         const ad::Tensor& memory, const SparseGraph& graph,
                         const ad::Tensor* edge_bias, bool output_bias);
  ad::Tensor self_attention_block(ad::Tape& tape, const std::string& prefix, const ad::Tensor& x,
                                  const SparseGraph& graph);

  void add_linear(const std::string& name, int in, int out, bool bias);
  void add_norm(const std::string& name, int width);

  ModelConfig cfg_;
  ad::ParameterSet params_;
  std::mt19937_64 init_rng_;
};

}  // namespace motformer
