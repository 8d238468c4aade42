#include "motformer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace motformer {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_doubles(std::ostream& out, const ad::Matrix& m) {
  for (ad::Index i = 0; i < m.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(m.data()[i]));
}

json model_json(const ModelConfig& c) {
  return {{"dim", c.dim},
          {"heads", c.heads},
          {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers},
          {"dropout", c.dropout},
          {"ffn_multiplier", c.ffn_multiplier},
          {"num_classes", c.num_classes}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.dim = j.at("dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.decoder_layers = j.at("decoder_layers").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.ffn_multiplier = j.at("ffn_multiplier").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const FitState* fit_state, const std::string& metadata) {
  const ad::ParameterSet& params = model.params();
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const ad::Parameter& p : params) {
    entries.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(p.value.size());
  }
  json header = {{"format_version", kCheckpointFormatVersion},
                 {"model_config", model_json(model.config())},
                 {"parameters", entries},
                 {"optimizer", nullptr},
                 {"metadata", json::parse(metadata)}};
  if (fit_state != nullptr) {
    if (fit_state->optimizer.m.size() != params.size() || fit_state->optimizer.v.size() != params.size())
      throw CheckpointError("optimizer state does not match the parameter set");
    // Moments follow the parameters: all m tensors, then all v tensors.
    header["optimizer"] = {{"step", fit_state->optimizer.step},
                           {"next_epoch", fit_state->next_epoch},
                           {"m_offset", offset},
                           {"v_offset", 2 * offset}};
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const ad::Parameter& p : params) put_doubles(out, p.value);
  if (fit_state != nullptr) {
    for (const ad::Matrix& m : fit_state->optimizer.m) put_doubles(out, m);
    for (const ad::Matrix& v : fit_state->optimizer.v) put_doubles(out, v);
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 8) throw CheckpointError(where + "truncated header");
  const std::uint64_t header_len = get_u64(bytes.data());
  if (header_len > bytes.size() - 8) throw CheckpointError(where + "header length exceeds file size");
  const std::size_t payload_start = 8 + header_len;
  const std::size_t payload_doubles = (bytes.size() - payload_start) / 8;
  if ((bytes.size() - payload_start) % 8 != 0) throw CheckpointError(where + "payload is not a whole number of doubles");

  auto read_matrix = [&](std::uint64_t offset, ad::Index rows, ad::Index cols) {
    const auto count = static_cast<std::uint64_t>(rows * cols);
    if (offset + count > payload_doubles) throw CheckpointError(where + "tensor extends past the payload");
    ad::Matrix m(rows, cols);
    const unsigned char* base = bytes.data() + payload_start + 8 * offset;
    for (std::uint64_t i = 0; i < count; ++i) m.data()[i] = std::bit_cast<double>(get_u64(base + 8 * i));
    return m;
  };

  Checkpoint ck;
  try {
    const json header = json::parse(bytes.begin() + 8, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw CheckpointError(where + "unsupported format_version " + std::to_string(version));
    ck.model_config = model_from_json(header.at("model_config"));
    std::vector<std::array<ad::Index, 2>> shapes;
    for (const json& e : header.at("parameters")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<std::array<ad::Index, 2>>();
      if (ck.parameters.count(name)) throw CheckpointError(where + "duplicate parameter " + name);
      ck.parameters.emplace(name, read_matrix(e.at("offset").get<std::uint64_t>(), shape[0], shape[1]));
      ck.order.push_back(name);
      shapes.push_back(shape);
    }
    ck.metadata = header.at("metadata").dump();
    const json& opt = header.at("optimizer");
    if (!opt.is_null()) {
      FitState fs;
      fs.optimizer.step = opt.at("step").get<long>();
      fs.next_epoch = opt.at("next_epoch").get<int>();
      std::uint64_t m_off = opt.at("m_offset").get<std::uint64_t>();
      std::uint64_t v_off = opt.at("v_offset").get<std::uint64_t>();
      for (const auto& s : shapes) {
        fs.optimizer.m.push_back(read_matrix(m_off, s[0], s[1]));
        fs.optimizer.v.push_back(read_matrix(v_off, s[0], s[1]));
        m_off += static_cast<std::uint64_t>(s[0] * s[1]);
        v_off += static_cast<std::uint64_t>(s[0] * s[1]);
      }
      ck.fit_state = std::move(fs);
    }
  } catch (const json::exception& e) {
    throw CheckpointError(where + "bad header: " + e.what());
  }
  return ck;
}

void load_parameters(Model& model, const Checkpoint& ck) {
  if (!(model.config() == ck.model_config))
    throw CheckpointError("checkpoint model config differs from the model's");
  ad::ParameterSet& params = model.params();
  if (params.size() != ck.parameters.size())
    throw CheckpointError("checkpoint has " + std::to_string(ck.parameters.size()) +
                          " parameters, model has " + std::to_string(params.size()));
  for (ad::Parameter& p : params) {
    auto it = ck.parameters.find(p.name);
    if (it == ck.parameters.end()) throw CheckpointError("checkpoint lacks parameter " + p.name);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
      throw CheckpointError("shape mismatch for " + p.name);
  }
  for (ad::Parameter& p : params) p.value = ck.parameters.at(p.name);
}

}  // namespace motformer
