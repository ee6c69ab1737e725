#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace acort {

/// Frequency-ranked word vocabulary. Index 0 is the most frequent word; the
/// reserved `<UNK>` entry always takes the last index.
class WordVocab {
 public:
  static constexpr std::string_view kUnkToken = "<UNK>";

  WordVocab() = default;

  /// Takes entries already in index order. The last entry must be `<UNK>`.
  WordVocab(std::vector<std::string> words, std::vector<std::int64_t> counts);

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::int64_t>& counts() const { return counts_; }
  std::int64_t unk_index() const { return static_cast<std::int64_t>(words_.size()) - 1; }

  /// Index of `word`, or `unk_index()` when the word is unknown.
  std::int64_t index_of(std::string_view word) const;
  std::optional<std::int64_t> find(std::string_view word) const;
  const std::string& word_at(std::int64_t index) const;

  void write(std::ostream& out) const;
  static WordVocab read(std::istream& in);

 private:
  std::vector<std::string> words_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::string, std::int64_t> index_;
};

/// Whitespace tokenization. No case folding or punctuation handling.
std::vector<std::string> tokenize(std::string_view text);
std::string join_words(const std::vector<std::string>& words);

/// Sorts by descending count, ties by ascending word; words seen fewer than
/// `min_frequency` times collapse into `<UNK>`.
WordVocab build_vocab(std::span<const std::string> corpus, std::int64_t min_frequency);

/// Smallest d >= 1 with base^d >= vocab_size.
int radix_digits(std::int64_t vocab_size, std::int64_t base);

class RadixVocab {
 public:
  RadixVocab(WordVocab vocab, int base);

  int base() const { return base_; }
  int digits() const { return digits_; }
  int bos_id() const { return base_; }
  int eos_id() const { return base_ + 1; }
  int encoded_size() const { return base_ + 2; }
  /// base^digits, the number of representable regular indices.
  std::int64_t capacity() const { return capacity_; }
  const WordVocab& word_vocab() const { return vocab_; }

 private:
  WordVocab vocab_;
  int base_;
  int digits_;
  std::int64_t capacity_;
};

enum class SpecialToken { bos, eos };
enum class StreamMode { word_level, radix };

struct TokenStream {
  std::vector<int> ids;
  StreamMode mode = StreamMode::radix;

  bool operator==(const TokenStream&) const = default;
};

/// Digits of a regular index, least significant first.
std::vector<int> encode_index(std::int64_t index, const RadixVocab& rv);
std::vector<int> encode_index(SpecialToken token, const RadixVocab& rv);

/// Inverse of encode_index. In lenient mode an index outside the word
/// vocabulary becomes `<UNK>`; in strict mode it throws.
std::int64_t decode_digits(std::span<const int> digits, const RadixVocab& rv, bool strict);

TokenStream encode_caption(const std::vector<std::string>& words, const RadixVocab& rv);
std::vector<std::string> decode_stream(const TokenStream& ts, const RadixVocab& rv, bool strict);

/// Uniform front over the two token schemes: radix digits, or one id per word
/// with BOS/EOS appended after the regular words.
class TokenCodec {
 public:
  static TokenCodec word_level(WordVocab vocab);
  static TokenCodec radix(WordVocab vocab, int base);

  StreamMode mode() const { return radix_ ? StreamMode::radix : StreamMode::word_level; }
  const WordVocab& word_vocab() const { return vocab_; }
  const RadixVocab* radix_vocab() const { return radix_ ? &*radix_ : nullptr; }
  /// 0 in word-level mode.
  int radix_base() const { return radix_ ? radix_->base() : 0; }

  int bos_id() const;
  int eos_id() const;
  /// Rows of the embedding table: v + 2 or |V_o| + 2.
  int encoded_size() const;
  /// Stream tokens per word.
  int tokens_per_word() const { return radix_ ? radix_->digits() : 1; }

  TokenStream encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const TokenStream& ts, bool strict) const;

 private:
  WordVocab vocab_;
  std::optional<RadixVocab> radix_;
};

void write_stream(std::ostream& out, const TokenStream& ts);
TokenStream parse_stream(std::string_view text, StreamMode mode);

}  // namespace acort
