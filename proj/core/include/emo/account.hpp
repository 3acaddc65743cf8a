#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace emo {

/// How a layer's weights are laid out, for cost accounting.
enum class AccountKind {
  Standard,   // dense k x k convolution
  Pointwise,  // 1 x 1 convolution
  Depthwise,  // one k x k filter per channel
  Separable,  // depthwise k x k followed by pointwise 1 x 1
  BatchNorm,  // gamma and beta per channel
  Dense,      // fully connected, s = 1
};

std::string_view to_string(AccountKind kind);
AccountKind parse_account_kind(std::string_view name);

/// Counts only the layers that multiply: everything except BatchNorm.
bool is_convolutional(AccountKind kind);

/// One layer as seen by the cost model: n_prev input channels, s x s
/// kernel, n output filters.
struct LayerAccountEntry {
  std::uint64_t n_prev = 1;
  std::uint64_t s = 1;
  std::uint64_t n = 1;
  AccountKind kind = AccountKind::Standard;
  bool bias = false;
  /// Output feature-map side length; 0 when not tied to an input size.
  std::uint64_t m = 0;
  std::string label;

  friend bool operator==(const LayerAccountEntry&,
                         const LayerAccountEntry&) = default;
};

}  // namespace emo
