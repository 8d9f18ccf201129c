#include "mtgrow/checkpoint.hpp"

#include <bit>
#include <cstring>

namespace mtgrow {

using nlohmann::json;

namespace {

void put_u64le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64le(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

void append_f64le(std::string& out, const std::vector<double>& data) {
  static_assert(sizeof(double) == 8);
  size_t at = out.size();
  out.resize(at + data.size() * 8);
  std::memcpy(&out[at], data.data(), data.size() * 8);
  if constexpr (std::endian::native == std::endian::big) {
    for (size_t i = at; i < out.size(); i += 8)
      for (int j = 0; j < 4; ++j) std::swap(out[i + static_cast<size_t>(j)], out[i + 7 - static_cast<size_t>(j)]);
  }
}

std::vector<double> read_f64le(const unsigned char* p, size_t count) {
  std::vector<double> out(count);
  std::memcpy(out.data(), p, count * 8);
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& d : out) {
      auto* b = reinterpret_cast<unsigned char*>(&d);
      for (int j = 0; j < 4; ++j) std::swap(b[j], b[7 - j]);
    }
  }
  return out;
}

// Shared by save (caller misuse -> Domain) and load (file corruption ->
// IndexMismatch).
void validate(const Checkpoint& c, ErrorKind kind) {
  c.config.validate();
  auto expect = expected_param_shapes(c.config);
  if (c.params.size() != expect.size())
    fail(kind, "parameter set size " + std::to_string(c.params.size()) + " != expected " +
                   std::to_string(expect.size()));
  for (const auto& [name, shape] : expect) {
    auto it = c.params.find(name);
    if (it == c.params.end()) fail(kind, "missing parameter: " + name);
    if (it->second.shape != shape)
      fail(kind, "parameter " + name + " has shape " + shape_str(it->second.shape) +
                     ", config expects " + shape_str(shape));
  }
  if (c.adam_m.size() != c.adam_v.size())
    fail(kind, "adam_m and adam_v hold different name sets");
  for (const auto& [name, m] : c.adam_m) {
    auto itv = c.adam_v.find(name);
    if (itv == c.adam_v.end()) fail(kind, "moment " + name + " present in adam_m only");
    auto itp = c.params.find(name);
    if (itp == c.params.end()) fail(kind, "moment for unknown parameter: " + name);
    if (m.shape != itp->second.shape || itv->second.shape != itp->second.shape)
      fail(kind, "moment shape mismatch for " + name);
  }
  if (static_cast<int64_t>(c.vocab.tokens.size()) != c.config.vocab_size)
    fail(kind, "vocab size " + std::to_string(c.vocab.tokens.size()) + " != config vocab_size " +
                   std::to_string(c.config.vocab_size));
  if (c.params.at("embedding.table").rows() != static_cast<int64_t>(c.vocab.tokens.size()))
    fail(kind, "embedding table rows != vocab size");
  if (c.step < 0) fail(kind, "negative step counter");
}

}  // namespace

json config_to_json(const ModelConfig& cfg) {
  return json{{"enc_layers", cfg.enc_layers},
              {"dec_layers", cfg.dec_layers},
              {"model_dim", cfg.model_dim},
              {"ffn_hidden_dim", cfg.ffn_hidden_dim},
              {"heads", cfg.heads},
              {"vocab_size", cfg.vocab_size},
              {"attention_dropout", cfg.attention_dropout},
              {"label_smoothing_epsilon", cfg.label_smoothing_epsilon},
              {"max_positions", cfg.max_positions}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  try {
    cfg.enc_layers = j.at("enc_layers").get<int64_t>();
    cfg.dec_layers = j.at("dec_layers").get<int64_t>();
    cfg.model_dim = j.at("model_dim").get<int64_t>();
    cfg.ffn_hidden_dim = j.at("ffn_hidden_dim").get<int64_t>();
    cfg.heads = j.at("heads").get<int64_t>();
    cfg.vocab_size = j.at("vocab_size").get<int64_t>();
    if (j.contains("attention_dropout")) cfg.attention_dropout = j.at("attention_dropout").get<double>();
    if (j.contains("label_smoothing_epsilon"))
      cfg.label_smoothing_epsilon = j.at("label_smoothing_epsilon").get<double>();
    if (j.contains("max_positions")) cfg.max_positions = j.at("max_positions").get<int64_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::IndexMismatch, std::string("bad config block: ") + e.what());
  }
  return cfg;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  validate(ckpt, ErrorKind::Domain);

  // section-prefixed names; std::map already iterates lexicographically
  std::map<std::string, const Tensor*> indexed;
  for (const auto& [name, t] : ckpt.params) indexed["param." + name] = &t;
  for (const auto& [name, t] : ckpt.adam_m) indexed["adam_m." + name] = &t;
  for (const auto& [name, t] : ckpt.adam_v) indexed["adam_v." + name] = &t;

  json tensors = json::object();
  int64_t offset = 0;
  for (const auto& [name, t] : indexed) {
    int64_t bytes = t->numel() * 8;
    tensors[name] = {{"dtype", "f64le"}, {"shape", t->shape}, {"offset", offset}, {"length", bytes}};
    offset += bytes;
  }
  json header{{"format_version", kCheckpointFormatVersion},
              {"config", config_to_json(ckpt.config)},
              {"vocab", ckpt.vocab.tokens},
              {"step", ckpt.step},
              {"tensors", tensors}};
  std::string header_str = header.dump();

  std::string out;
  out.reserve(16 + header_str.size() + static_cast<size_t>(offset));
  out += kCheckpointMagic;
  put_u64le(out, header_str.size());
  out += header_str;
  for (const auto& [name, t] : indexed) {
    (void)name;
    append_f64le(out, t->data);
  }
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string raw = read_file(path);
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
  if (raw.size() < 16) fail(ErrorKind::Truncated, path + ": shorter than magic + header length");
  if (std::memcmp(raw.data(), kCheckpointMagic, 8) != 0)
    fail(ErrorKind::BadMagic, path + ": bad magic");
  uint64_t header_len = get_u64le(bytes + 8);
  if (16 + header_len > raw.size())
    fail(ErrorKind::Truncated, path + ": header length " + std::to_string(header_len) +
                                   " exceeds file size " + std::to_string(raw.size()));
  json header = json::parse(raw.begin() + 16, raw.begin() + 16 + static_cast<int64_t>(header_len),
                            nullptr, false);
  if (header.is_discarded()) fail(ErrorKind::Truncated, path + ": header is not valid JSON");

  if (!header.contains("format_version") || !header["format_version"].is_number_integer())
    fail(ErrorKind::IndexMismatch, path + ": missing format_version");
  int64_t version = header["format_version"].get<int64_t>();
  if (version != kCheckpointFormatVersion)
    fail(ErrorKind::BadVersion,
         path + ": format_version " + std::to_string(version) + ", expected " +
             std::to_string(kCheckpointFormatVersion));

  Checkpoint ckpt;
  if (!header.contains("config") || !header.contains("vocab") || !header.contains("step") ||
      !header.contains("tensors") || !header["tensors"].is_object())
    fail(ErrorKind::IndexMismatch, path + ": header missing a required section");
  ckpt.config = config_from_json(header["config"]);
  try {
    ckpt.vocab = Vocab::from_tokens(header["vocab"].get<std::vector<std::string>>());
    ckpt.step = header["step"].get<int64_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::IndexMismatch, path + ": " + e.what());
  }

  size_t blob_base = 16 + header_len;
  int64_t blob_size = static_cast<int64_t>(raw.size() - blob_base);
  int64_t expect_offset = 0;
  for (const auto& [name, entry] : header["tensors"].items()) {
    std::string section, bare;
    for (const char* prefix : {"param.", "adam_m.", "adam_v."}) {
      if (name.rfind(prefix, 0) == 0) {
        section = prefix;
        bare = name.substr(section.size());
        break;
      }
    }
    if (section.empty()) fail(ErrorKind::IndexMismatch, path + ": unknown index section in " + name);
    std::vector<int64_t> shape;
    int64_t offset = 0, length = 0;
    std::string dtype;
    try {
      shape = entry.at("shape").get<std::vector<int64_t>>();
      offset = entry.at("offset").get<int64_t>();
      length = entry.at("length").get<int64_t>();
      dtype = entry.at("dtype").get<std::string>();
    } catch (const json::exception& e) {
      fail(ErrorKind::IndexMismatch, path + ": bad index entry " + name + ": " + e.what());
    }
    if (dtype != "f64le") fail(ErrorKind::IndexMismatch, path + ": unsupported dtype " + dtype);
    if (length != shape_numel(shape) * 8)
      fail(ErrorKind::IndexMismatch, path + ": " + name + " length " + std::to_string(length) +
                                         " disagrees with shape " + shape_str(shape));
    if (offset != expect_offset)
      fail(ErrorKind::IndexMismatch, path + ": " + name + " offset " + std::to_string(offset) +
                                         ", expected " + std::to_string(expect_offset));
    expect_offset += length;
    if (offset + length > blob_size)
      fail(ErrorKind::Truncated, path + ": blob region ends before " + name);
    Tensor t(shape, read_f64le(bytes + blob_base + static_cast<size_t>(offset),
                               static_cast<size_t>(shape_numel(shape))));
    if (section == "param.")
      ckpt.params.emplace(bare, std::move(t));
    else if (section == "adam_m.")
      ckpt.adam_m.emplace(bare, std::move(t));
    else
      ckpt.adam_v.emplace(bare, std::move(t));
  }
  if (expect_offset != blob_size)
    fail(ErrorKind::IndexMismatch, path + ": blob region has " + std::to_string(blob_size) +
                                       " bytes, index accounts for " + std::to_string(expect_offset));

  validate(ckpt, ErrorKind::IndexMismatch);
  return ckpt;
}

bool checkpoint_equal(const Checkpoint& a, const Checkpoint& b) {
  auto maps_equal = [](const NamedParamMap& x, const NamedParamMap& y) {
    if (x.size() != y.size()) return false;
    for (const auto& [name, t] : x) {
      auto it = y.find(name);
      if (it == y.end() || !bitwise_equal(t, it->second)) return false;
    }
    return true;
  };
  return a.step == b.step && a.vocab.tokens == b.vocab.tokens &&
         config_to_json(a.config) == config_to_json(b.config) && maps_equal(a.params, b.params) &&
         maps_equal(a.adam_m, b.adam_m) && maps_equal(a.adam_v, b.adam_v);
}

}  // namespace mtgrow
