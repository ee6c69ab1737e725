#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace acort {

inline constexpr int kMaxLayers = 64;

/// Layer -> parameter-group assignment of a shared stack. `(0x3,1x3)` is six
/// layers with two independent groups: [0,0,0,1,1,1].
class ShareLayout {
 public:
  ShareLayout() = default;
  /// Validates density of group ids and the layer cap.
  explicit ShareLayout(std::vector<int> assignment);

  /// Layout with `layers` independent layers (no sharing).
  static ShareLayout unshared(int layers);

  const std::vector<int>& assignment() const { return assignment_; }
  int num_layers() const { return static_cast<int>(assignment_.size()); }
  int num_independent() const { return num_independent_; }
  int group_of(int layer) const { return assignment_.at(static_cast<std::size_t>(layer)); }

  bool operator==(const ShareLayout&) const = default;

 private:
  std::vector<int> assignment_;
  int num_independent_ = 0;
};

/// Accepts `(0,0,1,1)`, `(0x2,1x2)` and mixtures; whitespace is ignored.
ShareLayout parse_layout(std::string_view text);

/// Canonical run-length form, `x` only for runs of two or more.
std::string format_layout(const ShareLayout& layout);

int independent_count(const ShareLayout& layout);

}  // namespace acort
