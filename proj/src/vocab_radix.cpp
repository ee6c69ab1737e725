#include "acort/vocab_radix.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace acort {

WordVocab::WordVocab(std::vector<std::string> words, std::vector<std::int64_t> counts)
    : words_(std::move(words)), counts_(std::move(counts)) {
  if (words_.size() != counts_.size()) {
    throw std::invalid_argument("vocab: words and counts differ in length");
  }
  if (words_.empty() || words_.back() != kUnkToken) {
    throw std::invalid_argument("vocab: last entry must be <UNK>");
  }
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<std::int64_t>(i)).second) {
      throw std::invalid_argument("vocab: duplicate word '" + words_[i] + "'");
    }
  }
}

std::optional<std::int64_t> WordVocab::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int64_t WordVocab::index_of(std::string_view word) const {
  return find(word).value_or(unk_index());
}

const std::string& WordVocab::word_at(std::int64_t index) const {
  if (index < 0 || index >= static_cast<std::int64_t>(words_.size())) {
    throw std::out_of_range("vocab: index " + std::to_string(index) + " out of range");
  }
  return words_[static_cast<std::size_t>(index)];
}

void WordVocab::write(std::ostream& out) const {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    out << words_[i] << '\t' << counts_[i] << '\n';
  }
}

WordVocab WordVocab::read(std::istream& in) {
  std::vector<std::string> words;
  std::vector<std::int64_t> counts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("vocab file line " + std::to_string(line_no) + ": expected word<TAB>count");
    }
    words.push_back(line.substr(0, tab));
    try {
      std::size_t used = 0;
      counts.push_back(std::stoll(line.substr(tab + 1), &used));
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error("vocab file line " + std::to_string(line_no) + ": bad count");
    }
  }
  for (std::size_t i = 1; i + 1 < words.size(); ++i) {
    if (counts[i] > counts[i - 1]) {
      throw std::runtime_error("vocab file: counts not in descending order at line " + std::to_string(i + 1));
    }
  }
  return WordVocab(std::move(words), std::move(counts));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

WordVocab build_vocab(std::span<const std::string> corpus, std::int64_t min_frequency) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  if (min_frequency < 1) throw std::invalid_argument("min_frequency must be >= 1");

  std::map<std::string, std::int64_t> freq;
  for (const auto& caption : corpus) {
    for (auto& w : tokenize(caption)) ++freq[w];
  }
  if (freq.erase(std::string(WordVocab::kUnkToken)) > 0) {
    throw std::invalid_argument("corpus contains the reserved token <UNK>");
  }

  std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
  // std::map iteration is already lexicographic, so a stable sort on count
  // leaves ties in ascending order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> words;
  std::vector<std::int64_t> counts;
  std::int64_t unk_count = 0;
  for (auto& [word, count] : ranked) {
    if (count >= min_frequency) {
      words.push_back(word);
      counts.push_back(count);
    } else {
      unk_count += count;
    }
  }
  words.emplace_back(WordVocab::kUnkToken);
  counts.push_back(unk_count);
  return WordVocab(std::move(words), std::move(counts));
}

int radix_digits(std::int64_t vocab_size, std::int64_t base) {
  if (base < 2) throw std::invalid_argument("radix base must be >= 2");
  if (vocab_size < 1) throw std::invalid_argument("vocab size must be >= 1");
  int d = 1;
  std::int64_t cap = base;
  while (cap < vocab_size) {
    cap *= base;
    ++d;
  }
  return d;
}

RadixVocab::RadixVocab(WordVocab vocab, int base)
    : vocab_(std::move(vocab)),
      base_(base),
      digits_(radix_digits(static_cast<std::int64_t>(vocab_.size()), base)),
      capacity_(1) {
  for (int j = 0; j < digits_; ++j) capacity_ *= base_;
}

std::vector<int> encode_index(std::int64_t index, const RadixVocab& rv) {
  if (index < 0 || index >= rv.capacity()) {
    throw std::out_of_range("index out of radix range");
  }
  std::vector<int> digits(static_cast<std::size_t>(rv.digits()));
  std::int64_t rest = index;
  for (auto& digit : digits) {
    digit = static_cast<int>(rest % rv.base());
    rest /= rv.base();
  }
  return digits;
}

std::vector<int> encode_index(SpecialToken token, const RadixVocab& rv) {
  return {token == SpecialToken::bos ? rv.bos_id() : rv.eos_id()};
}

std::int64_t decode_digits(std::span<const int> digits, const RadixVocab& rv, bool strict) {
  if (static_cast<int>(digits.size()) != rv.digits()) {
    throw std::invalid_argument("expected " + std::to_string(rv.digits()) + " digits, got " +
                                std::to_string(digits.size()));
  }
  std::int64_t index = 0;
  std::int64_t place = 1;
  for (int digit : digits) {
    if (digit < 0 || digit >= rv.base()) {
      throw std::invalid_argument("special token inside digit group");
    }
    index += digit * place;
    place *= rv.base();
  }
  if (index >= static_cast<std::int64_t>(rv.word_vocab().size())) {
    if (strict) {
      throw std::out_of_range("decoded index " + std::to_string(index) + " out of vocabulary");
    }
    return rv.word_vocab().unk_index();
  }
  return index;
}

TokenStream encode_caption(const std::vector<std::string>& words, const RadixVocab& rv) {
  TokenStream ts;
  ts.mode = StreamMode::radix;
  ts.ids.reserve(2 + words.size() * static_cast<std::size_t>(rv.digits()));
  ts.ids.push_back(rv.bos_id());
  for (const auto& w : words) {
    auto digits = encode_index(rv.word_vocab().index_of(w), rv);
    ts.ids.insert(ts.ids.end(), digits.begin(), digits.end());
  }
  ts.ids.push_back(rv.eos_id());
  return ts;
}

std::vector<std::string> decode_stream(const TokenStream& ts, const RadixVocab& rv, bool strict) {
  std::vector<std::string> words;
  std::vector<int> group;
  group.reserve(static_cast<std::size_t>(rv.digits()));
  std::size_t pos = 0;
  if (!ts.ids.empty() && ts.ids.front() == rv.bos_id()) pos = 1;
  for (; pos < ts.ids.size(); ++pos) {
    int id = ts.ids[pos];
    if (id == rv.eos_id()) break;
    if (id == rv.bos_id()) {
      if (strict) throw std::invalid_argument("BOS inside token stream");
      continue;
    }
    if (id < 0 || id > rv.eos_id()) {
      throw std::invalid_argument("token id " + std::to_string(id) + " outside encoded vocabulary");
    }
    group.push_back(id);
    if (static_cast<int>(group.size()) == rv.digits()) {
      words.push_back(rv.word_vocab().word_at(decode_digits(group, rv, strict)));
      group.clear();
    }
  }
  return words;
}

TokenCodec TokenCodec::word_level(WordVocab vocab) {
  TokenCodec codec;
  codec.vocab_ = std::move(vocab);
  return codec;
}

TokenCodec TokenCodec::radix(WordVocab vocab, int base) {
  TokenCodec codec;
  codec.radix_.emplace(vocab, base);
  codec.vocab_ = std::move(vocab);
  return codec;
}

int TokenCodec::bos_id() const {
  return radix_ ? radix_->bos_id() : static_cast<int>(vocab_.size());
}

int TokenCodec::eos_id() const {
  return radix_ ? radix_->eos_id() : static_cast<int>(vocab_.size()) + 1;
}

int TokenCodec::encoded_size() const { return eos_id() + 1; }

TokenStream TokenCodec::encode(const std::vector<std::string>& words) const {
  if (radix_) return encode_caption(words, *radix_);
  TokenStream ts;
  ts.mode = StreamMode::word_level;
  ts.ids.reserve(words.size() + 2);
  ts.ids.push_back(bos_id());
  for (const auto& w : words) ts.ids.push_back(static_cast<int>(vocab_.index_of(w)));
  ts.ids.push_back(eos_id());
  return ts;
}

std::vector<std::string> TokenCodec::decode(const TokenStream& ts, bool strict) const {
  if (radix_) return decode_stream(ts, *radix_, strict);
  std::vector<std::string> words;
  std::size_t pos = (!ts.ids.empty() && ts.ids.front() == bos_id()) ? 1 : 0;
  for (; pos < ts.ids.size(); ++pos) {
    int id = ts.ids[pos];
    if (id == eos_id()) break;
    if (id == bos_id()) {
      if (strict) throw std::invalid_argument("BOS inside token stream");
      continue;
    }
    words.push_back(vocab_.word_at(id));
  }
  return words;
}

void write_stream(std::ostream& out, const TokenStream& ts) {
  for (std::size_t i = 0; i < ts.ids.size(); ++i) {
    if (i) out << ' ';
    out << ts.ids[i];
  }
}

TokenStream parse_stream(std::string_view text, StreamMode mode) {
  TokenStream ts;
  ts.mode = mode;
  for (const auto& tok : tokenize(text)) {
    std::size_t used = 0;
    int id = 0;
    try {
      id = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw std::invalid_argument("not a token id: '" + tok + "'");
    ts.ids.push_back(id);
  }
  return ts;
}

}  // namespace acort
