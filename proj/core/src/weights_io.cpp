#include "fasp/weights_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fasp/error.hpp"
#include "fasp/hashing.hpp"
#include "fasp/rng.hpp"

namespace fasp {
namespace {

static_assert(std::endian::native == std::endian::little,
              "weight container I/O assumes a little-endian host");

constexpr const char* kConfigKey = "__config__";
constexpr const char* kCrcKey = "__crc32__";
constexpr float kInitStd = 0.02f;

// Named references to every tensor, in canonical payload order.
template <typename Weights, typename Fn>
void for_each_tensor(Weights& w, Fn&& fn) {
  fn("token_embedding", w.token_embedding);
  fn("position_embedding", w.position_embedding);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    fn(p + "ln1.gain", l.ln1_gain);
    fn(p + "ln1.bias", l.ln1_bias);
    fn(p + "attn.w_q", l.w_q);
    fn(p + "attn.b_q", l.b_q);
    fn(p + "attn.w_k", l.w_k);
    fn(p + "attn.b_k", l.b_k);
    fn(p + "attn.w_v", l.w_v);
    fn(p + "attn.b_v", l.b_v);
    fn(p + "attn.w_o", l.w_o);
    fn(p + "attn.b_o", l.b_o);
    fn(p + "ln2.gain", l.ln2_gain);
    fn(p + "ln2.bias", l.ln2_bias);
    fn(p + "ff.w_1", l.w_ff1);
    fn(p + "ff.b_1", l.b_ff1);
    fn(p + "ff.w_2", l.w_ff2);
    fn(p + "ff.b_2", l.b_ff2);
  }
  fn("ln_f.gain", w.lnf_gain);
  fn("ln_f.bias", w.lnf_bias);
  fn("unembed", w.unembed);
}

std::uint64_t read_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& cfg) {
  return {{"n_layers", cfg.n_layers},         {"n_heads_per_layer", cfg.n_heads_per_layer},
          {"d_model", cfg.d_model},           {"d_head", cfg.d_head},
          {"d_ff", cfg.d_ff},                 {"vocab_size", cfg.vocab_size},
          {"max_seq_len", cfg.max_seq_len},   {"ln_eps", cfg.ln_eps}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.n_heads_per_layer = j.at("n_heads_per_layer").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.d_head = j.at("d_head").get<int>();
    cfg.d_ff = j.at("d_ff").get<int>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.max_seq_len = j.at("max_seq_len").get<int>();
    cfg.ln_eps = j.at("ln_eps").get<float>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeaderError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> tensor_names(const ModelConfig& cfg) {
  const ModelWeights w = ModelWeights::zeros(cfg);
  std::vector<std::string> names;
  for_each_tensor(w, [&](const std::string& name, const TensorF32&) { names.push_back(name); });
  return names;
}

std::vector<std::uint8_t> encode_container(const TensorContainer& c) {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::uint8_t> payload;
  for (const auto& [name, t] : c.tensors) {
    const std::size_t begin = payload.size();
    const auto bytes = std::as_bytes(t.data());
    payload.resize(begin + bytes.size());
    std::memcpy(payload.data() + begin, bytes.data(), bytes.size());
    header[name] = {{"dtype", "f32"},
                    {"shape", t.shape()},
                    {"offset_begin", begin},
                    {"offset_end", payload.size()}};
  }
  header[kConfigKey] = c.config;
  header[kCrcKey] = crc32_of(payload);
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + payload.size());
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

TensorContainer decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw MalformedHeaderError("container shorter than its length prefix");
  const std::uint64_t header_len = read_u64_le(bytes.data());
  if (header_len == 0 || header_len > bytes.size() - 8) {
    throw MalformedHeaderError("header length " + std::to_string(header_len) +
                               " inconsistent with file size");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeaderError(std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains(kConfigKey) || !header.contains(kCrcKey)) {
    throw MalformedHeaderError("header lacks __config__ or __crc32__");
  }
  const auto payload = bytes.subspan(8 + header_len);

  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t begin, end;
  };
  std::vector<Entry> entries;
  for (const auto& [name, info] : header.items()) {
    if (name == kConfigKey || name == kCrcKey) continue;
    try {
      if (info.at("dtype").get<std::string>() != "f32") {
        throw MalformedHeaderError("tensor '" + name + "' has unsupported dtype");
      }
      entries.push_back({name, info.at("shape").get<std::vector<std::size_t>>(),
                         info.at("offset_begin").get<std::size_t>(),
                         info.at("offset_end").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw MalformedHeaderError("tensor '" + name + "': " + e.what());
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.begin < b.begin; });
  std::size_t cursor = 0;
  for (const auto& e : entries) {
    if (e.end < e.begin) throw OverlapError("tensor '" + e.name + "' has negative extent");
    if (e.begin != cursor) {
      throw OverlapError("tensor '" + e.name + "' at offset " + std::to_string(e.begin) +
                         (e.begin < cursor ? " overlaps" : " leaves a gap after") +
                         " the previous tensor");
    }
    if (e.end - e.begin != 4 * shape_product(e.shape)) {
      throw TensorShapeError("tensor '" + e.name + "' byte extent disagrees with its shape");
    }
    cursor = e.end;
  }
  if (cursor != payload.size()) {
    throw OverlapError("payload has " + std::to_string(payload.size()) + " bytes, tensors cover " +
                       std::to_string(cursor));
  }
  std::uint32_t stored_crc = 0;
  try {
    stored_crc = header.at(kCrcKey).get<std::uint32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeaderError(std::string("__crc32__: ") + e.what());
  }
  if (crc32_of(payload) != stored_crc) throw ChecksumError("payload CRC-32 mismatch");

  TensorContainer c;
  c.config = header.at(kConfigKey);
  for (const auto& e : entries) {
    std::vector<float> data(shape_product(e.shape));
    std::memcpy(data.data(), payload.data() + e.begin, e.end - e.begin);
    c.tensors.emplace(e.name, TensorF32(e.shape, std::move(data)));
  }
  return c;
}

void write_container(const TensorContainer& c, const std::filesystem::path& path) {
  const auto bytes = encode_container(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

TensorContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

std::vector<std::uint8_t> serialize_model(const ModelConfig& cfg, const ModelWeights& w) {
  w.validate(cfg);
  TensorContainer c;
  c.config = config_to_json(cfg);
  for_each_tensor(w, [&](const std::string& name, const TensorF32& t) { c.tensors.emplace(name, t); });
  return encode_container(c);
}

void save_model(const ModelConfig& cfg, const ModelWeights& w, const std::filesystem::path& path) {
  TensorContainer c;
  w.validate(cfg);
  c.config = config_to_json(cfg);
  for_each_tensor(w, [&](const std::string& name, const TensorF32& t) { c.tensors.emplace(name, t); });
  write_container(c, path);
}

namespace {

LoadedModel model_from_container(TensorContainer c) {
  LoadedModel m;
  m.config = config_from_json(c.config);
  m.weights = ModelWeights::zeros(m.config);
  for_each_tensor(m.weights, [&](const std::string& name, TensorF32& t) {
    auto it = c.tensors.find(name);
    if (it == c.tensors.end()) throw MissingTensorError(name);
    if (it->second.shape() != t.shape()) {
      throw TensorShapeError("tensor '" + name + "' shape disagrees with the model config");
    }
    t = std::move(it->second);
    c.tensors.erase(it);
  });
  if (!c.tensors.empty()) {
    throw MalformedHeaderError("unexpected tensor '" + c.tensors.begin()->first + "'");
  }
  m.weights.validate(m.config);
  return m;
}

}  // namespace

LoadedModel deserialize_model(std::span<const std::uint8_t> bytes) {
  return model_from_container(decode_container(bytes));
}

LoadedModel load_model(const std::filesystem::path& path) {
  return model_from_container(read_container(path));
}

std::string model_hash(const ModelConfig& cfg, const ModelWeights& w) {
  return sha256_hex(serialize_model(cfg, w));
}

ModelWeights make_toy_model(const ModelConfig& cfg, std::uint64_t seed) {
  ModelWeights w = ModelWeights::zeros(cfg);
  std::uint64_t stream = 0;
  for_each_tensor(w, [&](const std::string& name, TensorF32& t) {
    const bool is_gain = name.ends_with(".gain");
    const bool is_matrix = t.rank() == 2;
    const CounterRng rng(seed, stream++);
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (is_matrix) {
        data[i] = static_cast<float>(rng.normal(i)) * kInitStd;
      } else {
        data[i] = is_gain ? 1.0f : 0.0f;
      }
    }
  });
  return w;
}

}  // namespace fasp
