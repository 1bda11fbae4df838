#include <bit>
#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "catgcn/checkpoint.hpp"
#include "catgcn/error.hpp"
#include "catgcn/version.hpp"
#include "json.hpp"

namespace catgcn {
namespace {

Checkpoint sample_checkpoint(bool hidden = false) {
  ModelShapes s;
  s.num_features = 6;
  s.emb_dim = 3;
  s.hidden_dim = 2;
  s.num_classes = 2;
  s.projection_hidden = hidden;
  Checkpoint c;
  c.params = xavier_init(s, 11);
  c.params.dropout = 0.25;
  c.params.interaction.local_bias(0, 1) = -0.0;
  c.params.interaction.global_bias(0, 0) = 1e-310;  // subnormal survives the round trip
  c.config.eta = 1e-4;
  c.config.seed = 99;
  c.config.projection_hidden = hidden;
  c.dataset_fingerprint = 0xFEDCBA9876543210ULL;
  c.best_epoch = 17;
  return c;
}

std::uint64_t read_le(const std::string& b, std::size_t at, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (bool hidden : {false, true}) {
    const Checkpoint c = sample_checkpoint(hidden);
    const Checkpoint back = parse_checkpoint(serialize_checkpoint(c));
    EXPECT_TRUE(back.params == c.params);
    EXPECT_EQ(back.config, c.config);
    EXPECT_EQ(back.dataset_fingerprint, c.dataset_fingerprint);
    EXPECT_EQ(back.best_epoch, 17u);
    EXPECT_EQ(back.library_version, kVersion);
    EXPECT_TRUE(std::signbit(back.params.interaction.local_bias(0, 1)));
    EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(c));
  }
}

TEST(Checkpoint, DocumentedLayout) {
  const Checkpoint c = sample_checkpoint();
  const std::string b = serialize_checkpoint(c);
  EXPECT_EQ(b.substr(0, 8), "CATGCNCK");
  EXPECT_EQ(read_le(b, 8, 4), 1u);
  const std::size_t h = read_le(b, 12, 8);
  const auto header = nlohmann::json::parse(b.substr(20, h));
  const std::size_t data = 20 + h;
  std::size_t total = 0;
  const auto tensors = c.params.tensors();
  ASSERT_EQ(header.at("tensors").size(), tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = header.at("tensors")[i];
    EXPECT_EQ(t.at("name"), std::string(tensors[i].first));
    const std::size_t off = t.at("offset");
    EXPECT_EQ(off, total);
    const DenseMatrix& m = *tensors[i].second;
    for (std::size_t k = 0; k < m.size(); ++k)
      ASSERT_EQ(read_le(b, data + off + 8 * k, 8), std::bit_cast<std::uint64_t>(m.values()[k]));
    total += m.size() * 8;
  }
  EXPECT_EQ(b.size(), data + total);
  EXPECT_EQ(header.at("dataset_fingerprint").get<std::uint64_t>(), 0xFEDCBA9876543210ULL);
}

TEST(Checkpoint, EveryTruncationIsRejected) {
  const std::string b = serialize_checkpoint(sample_checkpoint());
  for (std::size_t n = 0; n < b.size(); ++n) EXPECT_THROW(parse_checkpoint(std::string_view(b).substr(0, n)), InputError) << n;
}

TEST(Checkpoint, CorruptHeadersAreRejected) {
  const std::string good = serialize_checkpoint(sample_checkpoint());
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad_magic), InputError);

  std::string bad_version = good;
  bad_version[8] = 2;
  EXPECT_THROW(parse_checkpoint(bad_version), InputError);

  std::string huge_header = good;
  huge_header[19] = 0x7F;
  EXPECT_THROW(parse_checkpoint(huge_header), InputError);

  const std::size_t h = read_le(good, 12, 8);
  auto with_header = [&](const nlohmann::json& j) {
    const std::string text = j.dump();
    std::string out = good.substr(0, 12);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xFF));
    return out + text + good.substr(20 + h);
  };
  const auto header = nlohmann::json::parse(good.substr(20, h));

  auto j = header;
  j["shapes"]["emb_dim"] = 4;
  EXPECT_THROW(parse_checkpoint(with_header(j)), InputError);
  j = header;
  j["shapes"]["num_features"] = 1ULL << 60;
  EXPECT_THROW(parse_checkpoint(with_header(j)), InputError);
  j = header;
  j["tensors"][2]["name"] = "renamed";
  EXPECT_THROW(parse_checkpoint(with_header(j)), InputError);
  j = header;
  j["tensors"][5]["offset"] = 1 << 20;
  EXPECT_THROW(parse_checkpoint(with_header(j)), InputError);
  j = header;
  j.erase("config");
  EXPECT_THROW(parse_checkpoint(with_header(j)), InputError);
  j = header;
  j["config"]["monitor"] = "bogus";
  EXPECT_THROW(parse_checkpoint(with_header(j)), InputError);
  EXPECT_NO_THROW(parse_checkpoint(with_header(header)));

  std::string not_json = good;
  not_json[20] = '!';
  EXPECT_THROW(parse_checkpoint(not_json), InputError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "catgcn_ckpt_test.bin";
  const Checkpoint c = sample_checkpoint(true);
  save_checkpoint(path, c);
  EXPECT_TRUE(load_checkpoint(path).params == c.params);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), InputError);
}

}  // namespace
}  // namespace catgcn
