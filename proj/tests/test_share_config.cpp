#include <gtest/gtest.h>

#include <random>

#include "acort/share_config.hpp"

using namespace acort;

TEST(ParseLayout, RunLengthAndExplicitForms) {
  EXPECT_EQ(parse_layout("(0x3,1x3)").assignment(), (std::vector<int>{0, 0, 0, 1, 1, 1}));
  EXPECT_EQ(parse_layout("(0,0,1,1,2,2)").assignment(), (std::vector<int>{0, 0, 1, 1, 2, 2}));
  EXPECT_EQ(parse_layout("(0,1,2,2,1,0)").assignment(), (std::vector<int>{0, 1, 2, 2, 1, 0}));
  EXPECT_EQ(parse_layout(" ( 0x2 , 1 , 2x1 ) ").assignment(), (std::vector<int>{0, 0, 1, 2}));
}

TEST(ParseLayout, RejectsMalformedText) {
  for (const char* bad : {"", "()", "0,1", "(0,1", "(a)", "(0x0)", "(0x)", "(1)", "(0,2)", "(-1)", "(0,,1)"}) {
    EXPECT_THROW(parse_layout(bad), std::invalid_argument) << bad;
  }
  EXPECT_THROW(parse_layout("(0x65)"), std::invalid_argument);
  EXPECT_NO_THROW(parse_layout("(0x64)"));
}

TEST(ShareLayout, GroupIdsMustBeDense) {
  EXPECT_THROW(ShareLayout(std::vector<int>{0, 2}), std::invalid_argument);
  EXPECT_NO_THROW(ShareLayout(std::vector<int>{1, 0}));
  EXPECT_THROW(ShareLayout(std::vector<int>{}), std::invalid_argument);
  EXPECT_NO_THROW(ShareLayout(std::vector<int>{0, 1, 0}));
}

TEST(FormatLayout, Canonical) {
  EXPECT_EQ(format_layout(ShareLayout({0, 0, 0, 0, 0, 0})), "(0x6)");
  EXPECT_EQ(format_layout(ShareLayout({0, 1})), "(0,1)");
  EXPECT_EQ(format_layout(ShareLayout({0, 0, 1, 1, 2, 2})), "(0x2,1x2,2x2)");
  EXPECT_EQ(parse_layout("(0x2,1x2,2x2)"), parse_layout("(0,0,1,1,2,2)"));
}

TEST(IndependentCount, Examples) {
  EXPECT_EQ(independent_count(ShareLayout({0, 0, 0, 1, 1, 1})), 2);
  EXPECT_EQ(independent_count(ShareLayout({0, 0, 0, 0, 0, 0})), 1);
  EXPECT_EQ(independent_count(ShareLayout({0, 1, 2, 3, 4, 5})), 6);
  EXPECT_EQ(ShareLayout::unshared(4).num_independent(), 4);
}

TEST(FormatLayout, RandomLayoutsRoundTrip) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int layers = std::uniform_int_distribution<int>(1, kMaxLayers)(rng);
    std::vector<int> a;
    int next = 0;
    for (int i = 0; i < layers; ++i) {
      // Reuse an existing group or open the next one, keeping ids dense.
      const int g = std::uniform_int_distribution<int>(0, next)(rng);
      a.push_back(g);
      if (g == next) ++next;
    }
    const ShareLayout layout(a);
    const std::string text = format_layout(layout);
    EXPECT_EQ(parse_layout(text), layout) << text;
    EXPECT_EQ(format_layout(parse_layout(text)), text);
    EXPECT_EQ(layout.num_independent(), next);
  }
}
