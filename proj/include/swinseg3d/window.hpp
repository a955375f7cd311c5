#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "swinseg3d/tensor.hpp"

namespace swinseg3d {

using Extent3 = std::array<std::size_t, 3>;

/// Window extent and shift actually used on a feature map.
struct WindowPlan {
  Extent3 window;  // clamped per axis
  Extent3 shift;   // 0 on axes covered by a single window
  Extent3 padded;  // spatial dims rounded up to a multiple of the window
};

/// Applies the clamping rule: an axis no larger than `window_size` uses the
/// full axis as its window and is never shifted. Shifted blocks use
/// window / 2 on the remaining axes.
WindowPlan plan_windows(const Extent3& dims, std::size_t window_size, bool shifted);

/// x[C,D,H,W] -> [N, wd*wh*ww, C], windows in (z, y, x) raster order.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, const Extent3& window);

/// Inverse of window_partition for a map of spatial size `dims`.
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, const Extent3& dims, const Extent3& window);

/// Rolls the spatial axes of x[C,D,H,W] by -offset so the region starting at
/// `offset` moves to the origin. unshift rolls back.
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, const Extent3& offset);
template <typename T>
Tensor<T> cyclic_unshift(const Tensor<T>& x, const Extent3& offset);

/// Additive mask per window over token pairs: 0 where both tokens came from
/// the same pre-shift region, kMaskedLogit otherwise.
struct AttentionMask {
  static constexpr double kMaskedLogit = -1e9;
  std::size_t windows = 0;
  std::size_t tokens = 0;
  std::vector<double> values;  // windows x tokens x tokens

  bool all_zero() const;
  template <typename T>
  Tensor<T> as_tensor() const;  // [windows, 1, tokens, tokens]
};

AttentionMask build_attention_mask(const Extent3& dims, const Extent3& window, const Extent3& shift);

}  // namespace swinseg3d
