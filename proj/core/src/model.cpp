#include "motformer/model.hpp"

#include <cmath>

namespace motformer {

using ad::Tensor;

void validate(const ModelConfig& cfg) {
  if (cfg.dim <= 0 || cfg.heads <= 0) throw ConfigError("model.dim and model.heads must be > 0");
  if (cfg.dim % cfg.heads != 0) throw ConfigError("model.dim must be divisible by model.heads");
  if (cfg.encoder_layers < 0) throw ConfigError("model.encoder_layers must be >= 0");
  if (cfg.decoder_layers < 1) throw ConfigError("model.decoder_layers must be >= 1");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("model.dropout must be in [0, 1)");
  if (cfg.ffn_multiplier < 1) throw ConfigError("model.ffn_multiplier must be >= 1");
  if (cfg.num_classes < 1) throw ConfigError("model.num_classes must be >= 1");
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg), init_rng_(seed) {
  validate(cfg_);
  const int d = cfg_.dim;
  const int hidden = d * cfg_.ffn_multiplier;
  const int c = cfg_.heads;

  add_linear("embed.det.0", detection_input_dim(), d, true);
  add_linear("embed.det.1", d, d, true);
  add_linear("embed.edge.0", kEdgeFeatureDim, d, true);
  add_linear("embed.edge.1", d, d, true);

  auto add_attention = [&](const std::string& pre, bool out_bias) {
    add_linear(pre + ".q", d, d, true);
    add_linear(pre + ".k", d, d, true);
    add_linear(pre + ".v", d, d, true);
    add_linear(pre + ".out", d, d, out_bias);
  };
  auto add_ffn = [&](const std::string& pre) {
    add_norm(pre + ".norm", d);
    add_linear(pre + ".0", d, hidden, true);
    add_linear(pre + ".1", hidden, d, true);
  };

  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string pre = "encoder." + std::to_string(l);
    add_norm(pre + ".attn.norm", d);
    add_attention(pre + ".attn", true);
    add_ffn(pre + ".ffn");
  }
  for (int l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string pre = "decoder." + std::to_string(l);
    add_norm(pre + ".self.norm", d);
    add_attention(pre + ".self", true);
    add_norm(pre + ".cross.norm_query", d);
    add_norm(pre + ".cross.norm_memory", d);
    add_norm(pre + ".cross.norm_edge", d);
    add_attention(pre + ".cross", false);
    add_linear(pre + ".cross.W_A", d, c, false);
    add_linear(pre + ".cross.W_O_edge", c, d, true);
    add_ffn(pre + ".ffn");
    add_ffn(pre + ".edge_ffn");
  }
  for (const char* head : {"head.affinity", "head.velocity"}) {
    const std::string pre = head;
    add_norm(pre + ".norm", d);
    add_linear(pre + ".0", d, d, true);
    add_linear(pre + ".1", d, pre == "head.affinity" ? 1 : 2, true);
  }
}

void Model::add_linear(const std::string& name, int in, int out, bool bias) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-a, a);
  ad::Matrix w(in, out);
  for (ad::Index i = 0; i < w.size(); ++i) w.data()[i] = u(init_rng_);
  params_.add(name + ".W", std::move(w));
  if (bias) params_.add(name + ".b", ad::Matrix::Zero(1, out));
}

void Model::add_norm(const std::string& name, int width) {
  params_.add(name + ".gain", ad::Matrix::Ones(1, width));
  params_.add(name + ".bias", ad::Matrix::Zero(1, width));
}

Tensor Model::p(ad::Tape& tape, const std::string& name) { return tape.param(params_.at(name)); }

namespace {

Tensor apply_linear(ad::Tape& tape, ad::ParameterSet& params, const std::string& name,
                    const Tensor& x) {
  Tensor w = tape.param(params.at(name + ".W"));
  const std::string bname = name + ".b";
  if (params.contains(bname)) {
    Tensor b = tape.param(params.at(bname));
    return ad::linear(x, w, &b);
  }
  return ad::linear(x, w);
}

}  // namespace

Tensor Model::mlp(ad::Tape& tape, const std::string& prefix, const Tensor& x) {
  Tensor h = ad::relu(apply_linear(tape, params_, prefix + ".0", x));
  return apply_linear(tape, params_, prefix + ".1", h);
}

Tensor Model::norm(ad::Tape& tape, const std::string& prefix, const Tensor& x) {
  return ad::layer_norm(x, p(tape, prefix + ".gain"), p(tape, prefix + ".bias"));
}

Tensor Model::ffn(ad::Tape& tape, const std::string& prefix, const Tensor& x) {
  Tensor h = ad::relu(apply_linear(tape, params_, prefix + ".0", norm(tape, prefix + ".norm", x)));
  h = drop(tape, h);
  return apply_linear(tape, params_, prefix + ".1", h);
}

Tensor Model::drop(ad::Tape& tape, const Tensor& x) {
  if (!tape.dropout_train() || cfg_.dropout == 0.0) return x;
  return ad::dropout(x, cfg_.dropout, tape.next_dropout_seed(), true);
}

Model::AttentionResult Model::attend(ad::Tape& tape, const std::string& prefix,
                                     const Tensor& query, const Tensor& memory,
                                     const SparseGraph& graph, const Tensor* edge_bias,
                                     bool output_bias) {
  const ad::Index dh = cfg_.head_dim();
  const auto src = graph.src_indices();
  const auto dst = graph.dst_indices();
  Tensor q = apply_linear(tape, params_, prefix + ".q", query);
  Tensor k = apply_linear(tape, params_, prefix + ".k", memory);
  Tensor v = apply_linear(tape, params_, prefix + ".v", memory);

  Tensor qe = ad::row_gather(q, dst);
  Tensor ke = ad::row_gather(k, src);
  Tensor logits =
      ad::scale(ad::sum_col_blocks(ad::mul(qe, ke), dh), 1.0 / std::sqrt(static_cast<double>(dh)));
  if (edge_bias != nullptr) logits = ad::add(logits, *edge_bias);
  Tensor alpha = ad::segment_softmax(logits, dst, query.rows());
  Tensor ve = ad::row_gather(v, src);
  Tensor weighted = ad::mul(ad::repeat_col_blocks(alpha, dh), ve);
  Tensor agg = ad::index_add_rows(weighted, dst, query.rows());
  Tensor out = output_bias ? apply_linear(tape, params_, prefix + ".out", agg)
                           : ad::linear(agg, p(tape, prefix + ".out.W"));
  return {out, logits, alpha};
}

Tensor Model::self_attention_block(ad::Tape& tape, const std::string& prefix, const Tensor& x,
                                   const SparseGraph& graph) {
  Tensor xn = norm(tape, prefix + ".norm", x);
  AttentionResult a = attend(tape, prefix, xn, xn, graph, nullptr, true);
  return ad::add(x, drop(tape, a.output));
}

Tensor Model::embed_detections(ad::Tape& tape, const Tensor& raw) {
  if (raw.cols() != detection_input_dim())
    throw ad::AutodiffError("embed_detections: expected width " +
                            std::to_string(detection_input_dim()) + ", got " +
                            std::to_string(raw.cols()));
  return mlp(tape, "embed.det", raw);
}

Tensor Model::embed_edges(ad::Tape& tape, const Tensor& raw) {
  if (raw.cols() != kEdgeFeatureDim)
    throw ad::AutodiffError("embed_edges: expected width " + std::to_string(kEdgeFeatureDim) +
                            ", got " + std::to_string(raw.cols()));
  return mlp(tape, "embed.edge", raw);
}

Tensor Model::encode_tracks(ad::Tape& tape, const Tensor& tracks, const SparseGraph& track_graph) {
  if (tracks.rows() == 0) return tracks;
  Tensor h = tracks;
  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string pre = "encoder." + std::to_string(l);
    h = self_attention_block(tape, pre + ".attn", h, track_graph);
    h = ad::add(h, drop(tape, ffn(tape, pre + ".ffn", h)));
  }
  return h;
}

DecodeOutput Model::decode(ad::Tape& tape, const Tensor& detections,
                           const SparseGraph& detection_graph, const Tensor& tracks,
                           const SparseGraph& assoc_graph, const Tensor& edges) {
  DecodeOutput out;
  Tensor hd = detections;
  Tensor ha = edges;
  for (int l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string pre = "decoder." + std::to_string(l);
    hd = self_attention_block(tape, pre + ".self", hd, detection_graph);

    Tensor query = norm(tape, pre + ".cross.norm_query", hd);
    Tensor memory = norm(tape, pre + ".cross.norm_memory", tracks);
    Tensor edge_in = norm(tape, pre + ".cross.norm_edge", ha);
    Tensor edge_bias = ad::linear(edge_in, p(tape, pre + ".cross.W_A.W"));
    AttentionResult a = attend(tape, pre + ".cross", query, memory, assoc_graph, &edge_bias, false);
    out.cross_attention.push_back(a.weights);
    hd = ad::add(hd, drop(tape, a.output));
    hd = ad::add(hd, drop(tape, ffn(tape, pre + ".ffn", hd)));

    Tensor edge_update = apply_linear(tape, params_, pre + ".cross.W_O_edge", a.logits);
    ha = ad::add(ha, drop(tape, edge_update));
    ha = ad::add(ha, drop(tape, ffn(tape, pre + ".edge_ffn", ha)));
  }
  out.detections = hd;
  out.edges = ha;
  return out;
}

Tensor Model::affinity_logits(ad::Tape& tape, const Tensor& edges) {
  return mlp(tape, "head.affinity", norm(tape, "head.affinity.norm", edges));
}

Tensor Model::velocity(ad::Tape& tape, const Tensor& detections) {
  return mlp(tape, "head.velocity", norm(tape, "head.velocity.norm", detections));
}

}  // namespace motformer
