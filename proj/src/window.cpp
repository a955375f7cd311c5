#include "swinseg3d/window.hpp"

#include <algorithm>

#include "swinseg3d/ops.hpp"

namespace swinseg3d {

WindowPlan plan_windows(const Extent3& dims, std::size_t window_size, bool shifted) {
  WindowPlan p{};
  for (int a = 0; a < 3; ++a) {
    p.window[a] = std::min(window_size, dims[a]);
    p.shift[a] = (shifted && dims[a] > window_size) ? p.window[a] / 2 : 0;
    p.padded[a] = (dims[a] + p.window[a] - 1) / p.window[a] * p.window[a];
  }
  return p;
}

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, const Extent3& window) {
  if (x.rank() != 4) throw ShapeError("window_partition expects [C,D,H,W], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0);
  Extent3 n{};
  for (int a = 0; a < 3; ++a) {
    if (window[a] == 0 || x.dim(a + 1) % window[a] != 0) {
      throw ShapeError("window_partition: spatial dims of " + shape_str(x.shape()) + " not divisible by window " +
                       shape_str({window[0], window[1], window[2]}));
    }
    n[a] = x.dim(a + 1) / window[a];
  }
  auto t = ops::reshape(x, {c, n[0], window[0], n[1], window[1], n[2], window[2]});
  t = ops::permute(t, {1, 3, 5, 2, 4, 6, 0});
  return ops::reshape(t, {n[0] * n[1] * n[2], window[0] * window[1] * window[2], c});
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, const Extent3& dims, const Extent3& window) {
  Extent3 n{};
  for (int a = 0; a < 3; ++a) {
    if (window[a] == 0 || dims[a] % window[a] != 0) throw ShapeError("window_reverse: dims not divisible by window");
    n[a] = dims[a] / window[a];
  }
  if (windows.rank() != 3 || windows.dim(0) != n[0] * n[1] * n[2] ||
      windows.dim(1) != window[0] * window[1] * window[2]) {
    throw ShapeError("window_reverse: windows " + shape_str(windows.shape()) + " do not tile " +
                     shape_str({dims[0], dims[1], dims[2]}));
  }
  const std::size_t c = windows.dim(2);
  auto t = ops::reshape(windows, {n[0], n[1], n[2], window[0], window[1], window[2], c});
  t = ops::permute(t, {6, 0, 3, 1, 4, 2, 5});
  return ops::reshape(t, {c, dims[0], dims[1], dims[2]});
}

template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, const Extent3& offset) {
  return ops::roll(x, {0, -static_cast<long>(offset[0]), -static_cast<long>(offset[1]), -static_cast<long>(offset[2])});
}

template <typename T>
Tensor<T> cyclic_unshift(const Tensor<T>& x, const Extent3& offset) {
  return ops::roll(x, {0, static_cast<long>(offset[0]), static_cast<long>(offset[1]), static_cast<long>(offset[2])});
}

bool AttentionMask::all_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

template <typename T>
Tensor<T> AttentionMask::as_tensor() const {
  std::vector<T> v(values.begin(), values.end());
  return Tensor<T>::from_data({windows, 1, tokens, tokens}, std::move(v));
}

AttentionMask build_attention_mask(const Extent3& dims, const Extent3& window, const Extent3& shift) {
  // Label the shifted map by the slabs [0, n-w), [n-w, n-s), [n-s, n) per
  // axis; tokens of one window attend only within their own label.
  auto slab = [](std::size_t i, std::size_t n, std::size_t w, std::size_t s) -> std::size_t {
    if (s == 0) return 0;
    if (i < n - w) return 0;
    return i < n - s ? 1 : 2;
  };
  Extent3 n{};
  for (int a = 0; a < 3; ++a) {
    if (dims[a] % window[a] != 0) throw ShapeError("build_attention_mask: dims not divisible by window");
    if (shift[a] >= window[a] && shift[a] != 0) throw ShapeError("build_attention_mask: shift must be < window");
    n[a] = dims[a] / window[a];
  }
  AttentionMask m;
  m.windows = n[0] * n[1] * n[2];
  m.tokens = window[0] * window[1] * window[2];
  m.values.assign(m.windows * m.tokens * m.tokens, 0.0);
  std::vector<std::size_t> label(m.tokens);
  std::size_t wi = 0;
  for (std::size_t bz = 0; bz < n[0]; ++bz)
    for (std::size_t by = 0; by < n[1]; ++by)
      for (std::size_t bx = 0; bx < n[2]; ++bx, ++wi) {
        std::size_t t = 0;
        for (std::size_t z = 0; z < window[0]; ++z)
          for (std::size_t y = 0; y < window[1]; ++y)
            for (std::size_t x = 0; x < window[2]; ++x, ++t) {
              label[t] = slab(bz * window[0] + z, dims[0], window[0], shift[0]) * 9 +
                         slab(by * window[1] + y, dims[1], window[1], shift[1]) * 3 +
                         slab(bx * window[2] + x, dims[2], window[2], shift[2]);
            }
        double* w = m.values.data() + wi * m.tokens * m.tokens;
        for (std::size_t i = 0; i < m.tokens; ++i)
          for (std::size_t j = 0; j < m.tokens; ++j)
            if (label[i] != label[j]) w[i * m.tokens + j] = AttentionMask::kMaskedLogit;
      }
  return m;
}

template Tensor<float> window_partition(const Tensor<float>&, const Extent3&);
template Tensor<double> window_partition(const Tensor<double>&, const Extent3&);
template Tensor<float> window_reverse(const Tensor<float>&, const Extent3&, const Extent3&);
template Tensor<double> window_reverse(const Tensor<double>&, const Extent3&, const Extent3&);
template Tensor<float> cyclic_shift(const Tensor<float>&, const Extent3&);
template Tensor<double> cyclic_shift(const Tensor<double>&, const Extent3&);
template Tensor<float> cyclic_unshift(const Tensor<float>&, const Extent3&);
template Tensor<double> cyclic_unshift(const Tensor<double>&, const Extent3&);
template Tensor<float> AttentionMask::as_tensor<float>() const;
template Tensor<double> AttentionMask::as_tensor<double>() const;

}  // namespace swinseg3d
