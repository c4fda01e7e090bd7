#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fasp/model.hpp"

namespace fasp {

// Container layout (all integers little-endian):
//
//   u64 header_len | header_len bytes of UTF-8 JSON | payload
//
// The header maps each tensor name to
//   {"dtype": "f32", "shape": [...], "offset_begin": b, "offset_end": e}
// with offsets relative to the start of the payload. Two reserved keys:
//   "__config__"  model configuration object
//   "__crc32__"   CRC-32 of the payload bytes
// Tensors are contiguous and non-overlapping; e - b == 4 * prod(shape).

struct TensorContainer {
  nlohmann::json config;
  std::map<std::string, TensorF32> tensors;
};

std::vector<std::uint8_t> encode_container(const TensorContainer& c);
/// Parses and validates framing, offsets and checksum. Throws a distinct
/// ContainerError subclass for each failure kind.
TensorContainer decode_container(std::span<const std::uint8_t> bytes);

void write_container(const TensorContainer& c, const std::filesystem::path& path);
TensorContainer read_container(const std::filesystem::path& path);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

/// Canonical tensor names, in payload order.
std::vector<std::string> tensor_names(const ModelConfig& cfg);

std::vector<std::uint8_t> serialize_model(const ModelConfig& cfg, const ModelWeights& w);
void save_model(const ModelConfig& cfg, const ModelWeights& w, const std::filesystem::path& path);

struct LoadedModel {
  ModelConfig config;
  ModelWeights weights;
};

LoadedModel deserialize_model(std::span<const std::uint8_t> bytes);
LoadedModel load_model(const std::filesystem::path& path);

/// SHA-256 of the serialized container.
std::string model_hash(const ModelConfig& cfg, const ModelWeights& w);

/// Matrices ~ N(0, 0.02^2) from CounterRng(seed, tensor-index); biases and
/// layer-norm shifts 0; layer-norm gains 1.
ModelWeights make_toy_model(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace fasp
