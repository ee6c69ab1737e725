#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>

#include "acort/decoding.hpp"
#include "acort/vocab_radix.hpp"
#include "table_model.hpp"

using namespace acort;
using namespace acort::testing;

TEST(Greedy, PicksArgmaxWithLowestIdOnTies) {
  // Uniform over 4 ids: greedy takes id 0 until max_len.
  TableModel m(4, [](const std::vector<int>&) { return std::vector<double>(4, std::log(0.25)); });
  const Hypothesis h = greedy_decode(m, 5);
  EXPECT_EQ(h.tokens, (std::vector<int>{2, 0, 0, 0, 0}));
  EXPECT_FALSE(h.finished);
  EXPECT_NEAR(h.score, 4 * std::log(0.25), 1e-12);
}

TEST(Greedy, StopsAtEos) {
  TableModel m(4, [](const std::vector<int>& p) {
    return p.size() < 3 ? normalize({3, 0, 0, 0}) : normalize({0, 0, 0, 3});
  });
  const Hypothesis h = greedy_decode(m, 10);
  EXPECT_EQ(h.tokens, (std::vector<int>{2, 0, 0, 3}));
  EXPECT_TRUE(h.finished);
  EXPECT_THROW(greedy_decode(m, 1), std::invalid_argument);
}

TEST(Greedy, RepeatCallsAreIdentical) {
  TableModel m(10, hashed_scorer(10, 3, 2.0));
  EXPECT_EQ(greedy_decode(m, 12).tokens, greedy_decode(m, 12).tokens);
}

TEST(Beam, WidthOneEqualsGreedy) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    TableModel m(10, hashed_scorer(10, seed, 2.0));
    const Hypothesis g = greedy_decode(m, 8);
    const Hypothesis b = beam_search(m, BeamOptions{1, 8, {}});
    EXPECT_EQ(g.tokens, b.tokens) << seed;
    EXPECT_DOUBLE_EQ(g.score, b.score);
  }
}

TEST(Beam, EscapesGreedyTrap) {
  // Greedy takes 0 (p=.6) then faces a flat tail; 1 (p=.4) leads to EOS
  // with certainty.
  TableModel m(4, [](const std::vector<int>& p) {
    if (p.size() == 1) return std::vector<double>{std::log(0.6), std::log(0.4), -50, -50};
    if (p[1] == 1) return std::vector<double>{-50, -50, -50, 0.0};
    return std::vector<double>(4, std::log(0.25));
  });
  const Hypothesis g = greedy_decode(m, 3);
  EXPECT_EQ(g.tokens, (std::vector<int>{2, 0, 0}));
  const Hypothesis b = beam_search(m, BeamOptions{2, 3, {}});
  EXPECT_EQ(b.tokens, (std::vector<int>{2, 1, 3}));
  EXPECT_TRUE(b.finished);
  EXPECT_NEAR(b.score, std::log(0.4), 1e-9);
}

TEST(Beam, WidthTwoMatchesExhaustiveSearchOnHandBuiltModel) {
  // v = 8 digits plus BOS and EOS. The best finished sequence starts with
  // the second-ranked first token, which greedy never considers.
  const int vocab = 10;
  TableModel m(vocab, two_path_scorer());
  const Hypothesis oracle = exhaustive_best(m, vocab, 4);
  EXPECT_EQ(oracle.tokens, (std::vector<int>{8, 5, 6, 9}));
  const Hypothesis b = beam_search(m, BeamOptions{2, 4, {}});
  EXPECT_EQ(b.tokens, oracle.tokens);
  EXPECT_NEAR(b.score, oracle.score, 1e-12);
  EXPECT_NE(greedy_decode(m, 4).tokens, oracle.tokens);
}

TEST(Beam, ResultScoreIsItsSequenceScore) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TableModel m(10, hashed_scorer(10, seed, 3.0));
    for (int width : {1, 2, 3, 5}) {
      const Hypothesis b = beam_search(m, BeamOptions{width, 6, {}});
      EXPECT_NEAR(sequence_score(m, b.tokens), b.score, 1e-12);
    }
  }
}

TEST(Beam, LengthPenaltyChangesRanking) {
  // Short: BOS EOS with p = .5. Long: BOS 0 EOS with p = .45 * .95.
  TableModel m(3, [](const std::vector<int>& p) {
    if (p.size() == 1) return std::vector<double>{std::log(0.45), std::log(0.05), std::log(0.5)};
    return std::vector<double>{std::log(0.025), std::log(0.025), std::log(0.95)};
  });
  const Hypothesis raw = beam_search(m, BeamOptions{2, 3, {}});
  EXPECT_EQ(raw.tokens, (std::vector<int>{1, 2}));
  const RankFn per_token = [](const Hypothesis& h) {
    return h.score / static_cast<double>(h.tokens.size() - 1);
  };
  const Hypothesis normalized = beam_search(m, BeamOptions{2, 3, per_token});
  EXPECT_EQ(normalized.tokens, (std::vector<int>{1, 0, 2}));
}

TEST(Beam, ReturnsBestLiveWhenNothingFinishes) {
  TableModel m(4, [](const std::vector<int>&) { return std::vector<double>{std::log(0.7), std::log(0.3), -80, -80}; });
  const Hypothesis b = beam_search(m, BeamOptions{3, 4, {}});
  EXPECT_FALSE(b.finished);
  EXPECT_EQ(b.tokens, (std::vector<int>{2, 0, 0, 0}));
}

TEST(Beam, RejectsBadOptions) {
  TableModel m(4, [](const std::vector<int>&) { return std::vector<double>(4, std::log(0.25)); });
  EXPECT_THROW(beam_search(m, BeamOptions{0, 4, {}}), std::invalid_argument);
  EXPECT_THROW(beam_search(m, BeamOptions{2, 1, {}}), std::invalid_argument);
}

TEST(SequenceScore, SumsLogProbabilities) {
  TableModel m(4, [](const std::vector<int>& p) {
    return p.size() == 1 ? std::vector<double>{std::log(0.5), std::log(0.5), -60, -60}
                         : std::vector<double>{-60, -60, -60, 0.0};
  });
  EXPECT_NEAR(sequence_score(m, {2, 1, 3}), std::log(0.5), 1e-12);
  EXPECT_THROW(sequence_score(m, {1, 3}), std::invalid_argument);
}

TEST(CaptionFromTokens, DecodesLeniently) {
  const std::vector<std::string> corpus = {"a b c d e f g h i"};
  const TokenCodec codec = TokenCodec::radix(build_vocab(corpus, 1), 8);
  EXPECT_EQ(caption_from_tokens({8, 9}, codec), "");
  EXPECT_EQ(caption_from_tokens({8, 0, 0, 9}, codec), "a");
  EXPECT_EQ(caption_from_tokens({8, 0, 0, 1, 0, 7}, codec), "a b");
  // Index 63 is outside the ten-entry vocabulary.
  EXPECT_EQ(caption_from_tokens({8, 7, 7, 9}, codec), "<UNK>");
}

TEST(Beam, ScoreNonDecreasingInWidth) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    TableModel m(10, hashed_scorer(10, seed, 2.0));
    double previous = -std::numeric_limits<double>::infinity();
    for (int width : {1, 2, 3, 5}) {
      const Hypothesis b = beam_search(m, BeamOptions{width, 6, {}});
      EXPECT_GE(b.score, previous) << "seed " << seed << " width " << width;
      previous = b.score;
    }
  }
}
