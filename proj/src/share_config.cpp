#include "acort/share_config.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace acort {

ShareLayout::ShareLayout(std::vector<int> assignment) : assignment_(std::move(assignment)) {
  if (assignment_.empty()) throw std::invalid_argument("layout has no layers");
  if (assignment_.size() > static_cast<std::size_t>(kMaxLayers)) {
    throw std::invalid_argument("layout exceeds " + std::to_string(kMaxLayers) + " layers");
  }
  int max_id = -1;
  for (int g : assignment_) {
    if (g < 0) throw std::invalid_argument("negative group id");
    max_id = std::max(max_id, g);
  }
  std::vector<bool> seen(static_cast<std::size_t>(max_id) + 1, false);
  for (int g : assignment_) seen[static_cast<std::size_t>(g)] = true;
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw std::invalid_argument("gap in group ids");
  }
  num_independent_ = max_id + 1;
}

ShareLayout ShareLayout::unshared(int layers) {
  std::vector<int> a(static_cast<std::size_t>(std::max(layers, 0)));
  for (int i = 0; i < layers; ++i) a[static_cast<std::size_t>(i)] = i;
  return ShareLayout(std::move(a));
}

namespace {

class LayoutParser {
 public:
  explicit LayoutParser(std::string_view text) {
    for (char c : text) {
      if (!std::isspace(static_cast<unsigned char>(c))) text_.push_back(c);
    }
  }

  std::vector<int> parse() {
    expect('(');
    if (peek() == ')') throw std::invalid_argument("empty layout");
    std::vector<int> out;
    while (true) {
      int group = number();
      int repeat = 1;
      if (peek() == 'x' || peek() == 'X') {
        ++pos_;
        repeat = number();
        if (repeat == 0) throw std::invalid_argument("zero repeat count in layout");
      }
      if (out.size() + static_cast<std::size_t>(repeat) > static_cast<std::size_t>(kMaxLayers)) {
        throw std::invalid_argument("layout exceeds " + std::to_string(kMaxLayers) + " layers");
      }
      out.insert(out.end(), static_cast<std::size_t>(repeat), group);
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(')');
      break;
    }
    if (pos_ != text_.size()) throw std::invalid_argument("trailing characters after layout");
    return out;
  }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void expect(char c) {
    if (peek() != c) {
      throw std::invalid_argument(std::string("layout syntax: expected '") + c + "' at offset " +
                                  std::to_string(pos_));
    }
    ++pos_;
  }

  int number() {
    std::size_t start = pos_;
    long value = 0;
    while (std::isdigit(static_cast<unsigned char>(peek()))) {
      value = value * 10 + (peek() - '0');
      if (value > 1'000'000) throw std::invalid_argument("layout number too large");
      ++pos_;
    }
    if (pos_ == start) {
      throw std::invalid_argument("layout syntax: expected integer at offset " + std::to_string(start));
    }
    return static_cast<int>(value);
  }

  std::string text_;
  std::size_t pos_ = 0;
};

}  // namespace

ShareLayout parse_layout(std::string_view text) { return ShareLayout(LayoutParser(text).parse()); }

std::string format_layout(const ShareLayout& layout) {
  const auto& a = layout.assignment();
  std::string out = "(";
  std::size_t i = 0;
  while (i < a.size()) {
    std::size_t j = i;
    while (j < a.size() && a[j] == a[i]) ++j;
    if (i > 0) out += ',';
    out += std::to_string(a[i]);
    if (j - i >= 2) out += 'x' + std::to_string(j - i);
    i = j;
  }
  return out + ")";
}

int independent_count(const ShareLayout& layout) { return layout.num_independent(); }

}  // namespace acort
