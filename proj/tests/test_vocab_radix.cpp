#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "acort/toy_world.hpp"
#include "acort/vocab_radix.hpp"

using namespace acort;

namespace {

// Vocabulary of `n` entries: n - 1 synthetic words plus <UNK>.
WordVocab synthetic_vocab(std::int64_t n) {
  std::vector<std::string> words;
  std::vector<std::int64_t> counts;
  for (std::int64_t i = 0; i + 1 < n; ++i) {
    words.push_back("w" + std::to_string(i));
    counts.push_back(n - i);
  }
  words.emplace_back(WordVocab::kUnkToken);
  counts.push_back(0);
  return WordVocab(words, counts);
}

}  // namespace

TEST(BuildVocab, FrequencyOrder) {
  const std::vector<std::string> corpus = {"a cat", "a dog", "a cat"};
  const WordVocab v = build_vocab(corpus, 1);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.word_at(0), "a");
  EXPECT_EQ(v.word_at(1), "cat");
  EXPECT_EQ(v.word_at(2), "dog");
  EXPECT_EQ(v.counts()[0], 3);
  EXPECT_EQ(v.counts()[1], 2);
  EXPECT_EQ(v.counts()[2], 1);
  EXPECT_EQ(v.index_of("dog"), 2);
  EXPECT_EQ(v.word_at(v.unk_index()), "<UNK>");
}

TEST(BuildVocab, TiesBreakLexicographically) {
  const std::vector<std::string> corpus = {"zebra apple", "mango"};
  const WordVocab v = build_vocab(corpus, 1);
  EXPECT_EQ(v.word_at(0), "apple");
  EXPECT_EQ(v.word_at(1), "mango");
  EXPECT_EQ(v.word_at(2), "zebra");
}

TEST(BuildVocab, RareWordsCollapseIntoUnk) {
  const std::vector<std::string> corpus = {"a a b", "a c"};
  const WordVocab v = build_vocab(corpus, 2);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v.index_of("b"), v.unk_index());
  EXPECT_EQ(v.counts()[1], 2);  // b and c
}

TEST(BuildVocab, RejectsBadInput) {
  EXPECT_THROW(build_vocab(std::vector<std::string>{}, 1), std::invalid_argument);
  EXPECT_THROW(build_vocab(std::vector<std::string>{"a"}, 0), std::invalid_argument);
  EXPECT_THROW(build_vocab(std::vector<std::string>{"a <UNK>"}, 1), std::invalid_argument);
}

TEST(BuildVocab, BackSolvedWordVocabularyGivesTenPointThreeMillion) {
  // 2 * V * r with V = 10058, r = 512, plus the output bias.
  const std::int64_t v = 10058;
  EXPECT_NEAR(2.0 * v * 512 / 1e6, 10.3, 0.005);
}

TEST(WordVocab, FileRoundTrip) {
  const WordVocab v = build_vocab(std::vector<std::string>{"x y y z z z"}, 1);
  std::stringstream buf;
  v.write(buf);
  const WordVocab back = WordVocab::read(buf);
  EXPECT_EQ(back.words(), v.words());
  EXPECT_EQ(back.counts(), v.counts());
}

TEST(WordVocab, ReadRejectsMalformedLines) {
  std::stringstream no_tab("a 3\n<UNK>\t0\n");
  EXPECT_THROW(WordVocab::read(no_tab), std::runtime_error);
  std::stringstream ascending("a\t1\nb\t5\n<UNK>\t0\n");
  EXPECT_THROW(WordVocab::read(ascending), std::runtime_error);
}

TEST(RadixDigits, Examples) {
  EXPECT_EQ(radix_digits(10058, 768), 2);
  EXPECT_EQ(radix_digits(256, 256), 1);
  EXPECT_EQ(radix_digits(10058, 256), 2);
  EXPECT_EQ(radix_digits(1, 8), 1);
  EXPECT_EQ(radix_digits(65, 8), 3);
  EXPECT_THROW(radix_digits(10, 1), std::invalid_argument);
}

TEST(RadixDigits, SmallestSufficientPower) {
  for (std::int64_t base = 2; base <= 40; ++base) {
    for (std::int64_t n = 1; n <= 5000; n += 37) {
      const int d = radix_digits(n, base);
      std::int64_t p = 1;
      for (int i = 0; i < d; ++i) p *= base;
      EXPECT_GE(p, n);
      if (d > 1) EXPECT_LT(p / base, n);
    }
  }
}

TEST(EncodeIndex, Examples) {
  const RadixVocab rv256(synthetic_vocab(10058), 256);
  EXPECT_EQ(encode_index(300, rv256), (std::vector<int>{44, 1}));
  EXPECT_EQ(encode_index(SpecialToken::bos, rv256), (std::vector<int>{256}));
  EXPECT_EQ(encode_index(SpecialToken::eos, rv256), (std::vector<int>{257}));

  const RadixVocab rv768(synthetic_vocab(10058), 768);
  EXPECT_EQ(encode_index(0, rv768), (std::vector<int>{0, 0}));
  EXPECT_THROW(encode_index(768 * 768, rv768), std::out_of_range);
}

TEST(DecodeDigits, Examples) {
  const RadixVocab rv256(synthetic_vocab(10058), 256);
  EXPECT_EQ(decode_digits(std::vector<int>{44, 1}, rv256, true), 300);
  const RadixVocab rv768(synthetic_vocab(10058), 768);
  EXPECT_EQ(decode_digits(std::vector<int>{0, 0}, rv768, true), 0);
  // 767 + 767 * 768 = 589823 lies past the vocabulary.
  EXPECT_EQ(decode_digits(std::vector<int>{767, 767}, rv768, false), rv768.word_vocab().unk_index());
  EXPECT_THROW(decode_digits(std::vector<int>{767, 767}, rv768, true), std::out_of_range);
  EXPECT_THROW(decode_digits(std::vector<int>{1}, rv768, false), std::invalid_argument);
  EXPECT_THROW(decode_digits(std::vector<int>{768, 0}, rv768, false), std::invalid_argument);
}

TEST(DecodeDigits, ExhaustiveRoundTripBase8) {
  const RadixVocab rv(synthetic_vocab(64), 8);
  ASSERT_EQ(rv.digits(), 2);
  for (std::int64_t i = 0; i < 64; ++i) {
    const auto d = encode_index(i, rv);
    for (int x : d) {
      EXPECT_GE(x, 0);
      EXPECT_LT(x, 8);
    }
    EXPECT_EQ(decode_digits(d, rv, true), i);
  }
}

TEST(EncodeCaption, Examples) {
  const RadixVocab rv(synthetic_vocab(10058), 768);
  EXPECT_EQ(encode_caption({}, rv).ids, (std::vector<int>{768, 769}));
  EXPECT_EQ(encode_caption({"w0"}, rv).ids, (std::vector<int>{768, 0, 0, 769}));
  EXPECT_EQ(encode_caption({"never-seen"}, rv).ids.size(), 4u);
}

TEST(DecodeStream, Examples) {
  const RadixVocab rv768(synthetic_vocab(10058), 768);
  EXPECT_EQ(decode_stream(TokenStream{{768, 0, 0, 769}}, rv768, true), (std::vector<std::string>{"w0"}));
  EXPECT_TRUE(decode_stream(TokenStream{{768, 769}}, rv768, true).empty());
  EXPECT_TRUE(decode_stream(TokenStream{{768, 44, 769}}, rv768, true).empty());

  const RadixVocab rv256(synthetic_vocab(10058), 256);
  EXPECT_EQ(decode_stream(TokenStream{{256, 44, 1, 5, 257}}, rv256, true), (std::vector<std::string>{"w300"}));
  // Content after EOS is ignored.
  EXPECT_EQ(decode_stream(TokenStream{{256, 44, 1, 257, 3, 3}}, rv256, true), (std::vector<std::string>{"w300"}));
  EXPECT_THROW(decode_stream(TokenStream{{256, 999, 257}}, rv256, false), std::invalid_argument);
  EXPECT_THROW(decode_stream(TokenStream{{256, 0, 256, 0, 257}}, rv256, true), std::invalid_argument);
}

TEST(TokenCodec, WordLevelIdsFollowVocabulary) {
  const WordVocab v = build_vocab(std::vector<std::string>{"a b b"}, 1);
  const TokenCodec c = TokenCodec::word_level(v);
  EXPECT_EQ(c.bos_id(), 3);
  EXPECT_EQ(c.eos_id(), 4);
  EXPECT_EQ(c.encoded_size(), 5);
  EXPECT_EQ(c.radix_base(), 0);
  const TokenStream ts = c.encode({"b", "a", "q"});
  EXPECT_EQ(ts.ids, (std::vector<int>{3, 0, 1, 2, 4}));
  EXPECT_EQ(c.decode(ts, false), (std::vector<std::string>{"b", "a", "<UNK>"}));
}

TEST(TokenCodec, RadixEncodedSizeIndependentOfVocabulary) {
  for (std::int64_t n : {2, 9, 64, 65, 1000}) {
    const TokenCodec c = TokenCodec::radix(synthetic_vocab(n), 8);
    EXPECT_EQ(c.encoded_size(), 10);
  }
}

TEST(TokenCodec, ToyCaptionsRoundTrip) {
  const Dataset d = generate_dataset(3, 500, 0, 0);
  const auto captions = scene_captions(d.train);
  const TokenCodec c = TokenCodec::radix(build_vocab(captions, 1), 8);
  EXPECT_EQ(c.tokens_per_word(), 2);
  for (const auto& s : d.train) {
    const TokenStream ts = c.encode(s.caption);
    EXPECT_EQ(ts.ids.size(), 2 + 2 * s.caption.size());
    EXPECT_EQ(c.decode(ts, true), s.caption);
  }
}

TEST(TokenStreamText, WriteParseRoundTrip) {
  const TokenStream ts{{8, 3, 0, 1, 9}, StreamMode::radix};
  std::ostringstream out;
  write_stream(out, ts);
  EXPECT_EQ(out.str(), "8 3 0 1 9");
  EXPECT_EQ(parse_stream(out.str(), StreamMode::radix), ts);
  EXPECT_THROW(parse_stream("8 x 9", StreamMode::radix), std::invalid_argument);
}

TEST(Tokenize, SplitsOnWhitespace) {
  EXPECT_EQ(tokenize("  a\tb \n c "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(join_words({"a", "b"}), "a b");
  EXPECT_TRUE(tokenize("   ").empty());
}
