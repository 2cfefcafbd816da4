#include <gtest/gtest.h>

#include "topoleak/io.hpp"
#include "topoleak/rng.hpp"
#include "topoleak/text.hpp"

using namespace topoleak;

TEST(Text, TokenizeLowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(text::tokenize("Hello, World! x2"), (std::vector<std::string>{"hello", "world", "x2"}));
  EXPECT_TRUE(text::tokenize("  ,. ").empty());
}

TEST(Text, WhitespaceHelpers) {
  EXPECT_EQ(text::normalize_whitespace("  a \n b\t c  "), "a b c");
  EXPECT_EQ(text::trim("  x "), "x");
  EXPECT_EQ(text::join({"a", "b"}, " | "), "a | b");
  EXPECT_EQ(text::replace_all("a||b||c", "||", "+"), "a+b+c");
}

TEST(Text, JaccardOverTokenSets) {
  EXPECT_DOUBLE_EQ(text::token_jaccard("a b c", "b c d"), 0.5);
  EXPECT_DOUBLE_EQ(text::token_jaccard("", ""), 1.0);
  EXPECT_DOUBLE_EQ(text::token_jaccard("a a", "a"), 1.0);
}

TEST(Rng, DeriveSeedSeparatesSalts) {
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_EQ(derive_seed(5, 9), derive_seed(5, 9));
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.uniform_index(13), b.uniform_index(13));
}

TEST(Rng, UniformIndexStaysInRange) {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.uniform_index(7), 7u);
}

TEST(Io, Float32RoundTripIsLittleEndian) {
  const auto dir = std::filesystem::temp_directory_path() / "topoleak_io_test";
  std::filesystem::create_directories(dir);
  const std::vector<float> v{1.0f, -2.5f, 0.0f};
  io::write_f32_le(dir / "x.bin", v);
  EXPECT_EQ(io::read_f32_le(dir / "x.bin"), v);
  const auto bytes = io::read_text(dir / "x.bin");
  ASSERT_EQ(bytes.size(), 12u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[3]), 0x3f);  // 1.0f = 0x3f800000
  EXPECT_EQ(io::with_suffix(dir / "emb", ".json").filename(), "emb.json");
  std::filesystem::remove_all(dir);
}
