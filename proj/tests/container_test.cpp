#include <gtest/gtest.h>

#include <cstring>

#include "moldkit/container.hpp"

namespace moldkit {
namespace {

TEST(Container, HeaderLayoutIsLittleEndianLengthThenJson) {
  TensorContainer c;
  c.put("a", TensorF({2}, {1.0f, 2.0f}));
  const std::string bytes = c.serialize();
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  ASSERT_EQ(bytes.size(), 8 + n + 8);
  const std::string header = bytes.substr(8, n);
  EXPECT_NE(header.find("\"a\":{\"data_offsets\":[0,8],\"dtype\":\"F32\",\"shape\":[2]}"),
            std::string::npos)
      << header;
  float payload[2];
  std::memcpy(payload, bytes.data() + 8 + n, 8);
  EXPECT_EQ(payload[0], 1.0f);
  EXPECT_EQ(payload[1], 2.0f);
}

TEST(Container, RoundTripIsBitExact) {
  TensorContainer c;
  c.put("w", TensorF({2, 3}, {1.5f, -2.25f, 3e-8f, 4.0f, 5.0f, -0.0f}));
  c.put("d", TensorD({1}, {0.1}));
  c.metadata()["note"] = "x";
  const std::string bytes = c.serialize();
  const auto back = TensorContainer::parse(bytes);
  EXPECT_EQ(back.get_f32("w", {2, 3}), std::get<TensorF>(c.entries().at("w")));
  EXPECT_EQ(back.get_f64("d", {1})[0], 0.1);
  EXPECT_EQ(back.metadata().at("note"), "x");
  EXPECT_EQ(back.serialize(), bytes);
}

TEST(Container, MissingTensorIsNamed) {
  TensorContainer c;
  try {
    c.get_f32("blocks.2.attn.qkv.weight", {4, 12});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_STREQ(e.what(), "missing tensor blocks.2.attn.qkv.weight");
  }
}

TEST(Container, ShapeMismatchNamesExpectedAndActual) {
  TensorContainer c;
  c.put("q", TensorF({12, 4}));
  try {
    c.get_f32("q", {4, 12});
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("q"), std::string::npos);
    EXPECT_NE(msg.find("[4, 12]"), std::string::npos);
    EXPECT_NE(msg.find("[12, 4]"), std::string::npos);
  }
}

TEST(Container, TruncatedPayloadIsAnIoError) {
  TensorContainer c;
  c.put("w", TensorF({4}, {1, 2, 3, 4}));
  std::string bytes = c.serialize();
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(TensorContainer::parse(bytes), DataError);
  EXPECT_THROW(TensorContainer::parse(bytes.substr(0, 5)), DataError);
}

TEST(Container, RejectsUnknownDtype) {
  const std::string header = R"({"x":{"dtype":"BF16","shape":[1],"data_offsets":[0,2]}})";
  std::string bytes(8, '\0');
  const std::uint64_t n = header.size();
  std::memcpy(bytes.data(), &n, 8);
  bytes += header + "\x01\x02";
  EXPECT_THROW(TensorContainer::parse(bytes), DataError);
}

}  // namespace
}  // namespace moldkit
