#include <cstring>
#include <fstream>

#include <gtest/gtest.h>

#include "fasp/error.hpp"
#include "fasp/hashing.hpp"
#include "fasp/weights_io.hpp"
#include "toy.hpp"

namespace fasp {
namespace {

using testing::toy_config;

std::uint64_t header_len(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data(), 8);
  return n;
}

nlohmann::json header_of(const std::vector<std::uint8_t>& bytes) {
  const auto n = header_len(bytes);
  return nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n));
}

// Rebuilds the container with a new header and the original payload.
std::vector<std::uint8_t> with_header(const std::vector<std::uint8_t>& bytes, const nlohmann::json& h) {
  const auto n = header_len(bytes);
  const std::string text = h.dump();
  std::vector<std::uint8_t> out(8);
  const std::uint64_t len = text.size();
  std::memcpy(out.data(), &len, 8);
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n), bytes.end());
  return out;
}

TEST(WeightsIo, SaveLoadRoundTripIsBitwise) {
  const auto cfg = toy_config();
  const auto w = make_toy_model(cfg, 3);
  testing::TempDir dir;
  save_model(cfg, w, dir / "m.fasp");
  const auto loaded = load_model(dir / "m.fasp");
  EXPECT_EQ(loaded.config, cfg);
  EXPECT_EQ(loaded.weights, w);
  EXPECT_EQ(serialize_model(loaded.config, loaded.weights), serialize_model(cfg, w));
}

TEST(WeightsIo, HeaderLengthMatchesJson) {
  const auto cfg = toy_config();
  const auto bytes = serialize_model(cfg, make_toy_model(cfg, 1));
  const auto n = header_len(bytes);
  const auto h = header_of(bytes);
  EXPECT_EQ(h.dump().size(), n);
  EXPECT_EQ(h.at("__config__").at("d_model"), 32);
  EXPECT_EQ(h.at("unembed").at("shape"), nlohmann::json({32, 259}));
  const std::span<const std::uint8_t> payload(bytes.data() + 8 + n, bytes.size() - 8 - n);
  EXPECT_EQ(h.at("__crc32__").get<std::uint32_t>(), crc32_of(payload));
}

TEST(WeightsIo, TamperedPayloadFailsChecksum) {
  const auto cfg = toy_config();
  auto bytes = serialize_model(cfg, make_toy_model(cfg, 1));
  bytes[bytes.size() - 5] ^= 0x40;
  EXPECT_THROW(deserialize_model(bytes), ChecksumError);
}

TEST(WeightsIo, MissingTensorIsNamed) {
  const auto cfg = toy_config();
  auto c = decode_container(serialize_model(cfg, make_toy_model(cfg, 1)));
  c.tensors.erase("unembed");
  try {
    deserialize_model(encode_container(c));
    FAIL() << "expected MissingTensorError";
  } catch (const MissingTensorError& e) {
    EXPECT_EQ(e.tensor_name(), "unembed");
    EXPECT_NE(std::string(e.what()).find("unembed"), std::string::npos);
  }
}

TEST(WeightsIo, UnexpectedTensorAndWrongShapeRejected) {
  const auto cfg = toy_config();
  const auto base = decode_container(serialize_model(cfg, make_toy_model(cfg, 1)));
  auto extra = base;
  extra.tensors["bogus"] = TensorF32({2});
  EXPECT_THROW(deserialize_model(encode_container(extra)), ContainerError);
  auto bad = base;
  bad.tensors["ln_f.gain"] = TensorF32({31});
  EXPECT_THROW(deserialize_model(encode_container(bad)), TensorShapeError);
}

TEST(WeightsIo, EmptyAndTruncatedFilesAreMalformed) {
  EXPECT_THROW(decode_container(std::vector<std::uint8_t>{}), MalformedHeaderError);
  std::vector<std::uint8_t> b(8, 0);
  b[0] = 100;
  EXPECT_THROW(decode_container(b), MalformedHeaderError);
  testing::TempDir dir;
  std::ofstream(dir / "empty.fasp").close();
  EXPECT_THROW(load_model(dir / "empty.fasp"), MalformedHeaderError);
  EXPECT_THROW(load_model(dir / "absent.fasp"), IoError);
}

TEST(WeightsIo, OverlapAndExtentErrorsAreDistinct) {
  const auto cfg = toy_config();
  const auto bytes = serialize_model(cfg, make_toy_model(cfg, 1));
  auto h = header_of(bytes);
  auto overlap = h;
  const auto end0 = overlap.at("ln_f.bias").at("offset_end").get<std::uint64_t>();
  overlap["ln_f.gain"]["offset_begin"] = end0 - 4;
  overlap["ln_f.gain"]["offset_end"] = end0 - 4 + 32 * 4;
  EXPECT_THROW(decode_container(with_header(bytes, overlap)), OverlapError);

  auto extent = h;
  extent["ln_f.gain"]["shape"] = {16};
  EXPECT_THROW(decode_container(with_header(bytes, extent)), TensorShapeError);

  auto dtype = h;
  dtype["ln_f.gain"]["dtype"] = "f16";
  EXPECT_THROW(decode_container(with_header(bytes, dtype)), MalformedHeaderError);
}

TEST(WeightsIo, ToyModelDeterminism) {
  const auto cfg = toy_config();
  const auto a = make_toy_model(cfg, 1);
  EXPECT_EQ(a, make_toy_model(cfg, 1));
  const auto b = make_toy_model(cfg, 2);
  EXPECT_NE(a.token_embedding.data()[0], b.token_embedding.data()[0]);
  EXPECT_EQ(a.layers[0].ln1_gain.data()[0], 1.0f);
  EXPECT_EQ(a.layers[0].b_q.data()[0], 0.0f);
  double s2 = 0.0;
  for (float v : a.token_embedding.data()) s2 += double(v) * v;
  EXPECT_NEAR(std::sqrt(s2 / double(a.token_embedding.size())), 0.02, 0.001);
}

TEST(WeightsIo, GoldenFixtureLoads) {
  const auto m = load_model(testing::fixture("toy_model.fasp"));
  EXPECT_EQ(m.config, toy_config());
  EXPECT_EQ(m.weights.unembed.shape(), (std::vector<std::size_t>{32, 259}));
  EXPECT_EQ(m.weights.layers.size(), 2u);
  EXPECT_EQ(m.weights, make_toy_model(toy_config(), 1));
}

TEST(WeightsIo, GoldenPerplexity) {
  const auto cfg = toy_config();
  const auto w = make_toy_model(cfg, 1);
  const auto corpus = Vocab::byte_level().encode(testing::read_file(testing::fixture("corpus.txt")));
  const auto r = perplexity(cfg, w, HeadGateMask::all_present(cfg.n_heads()), corpus, 128);
  EXPECT_EQ(r.total_tokens, 741);
  EXPECT_NEAR(r.ppl, 258.09914417682717, 258.1 * 1e-6);
}

TEST(WeightsIo, ConfigJsonRoundTrip) {
  const auto cfg = toy_config();
  EXPECT_EQ(config_from_json(config_to_json(cfg)), cfg);
  auto j = config_to_json(cfg);
  j["d_head"] = 7;
  EXPECT_THROW(config_from_json(j), Error);
  EXPECT_EQ(tensor_names(cfg).size(), 2u + 2u * 16u + 3u);
}

}  // namespace
}  // namespace fasp
