#include "swinseg3d/layers.hpp"

#include <cmath>

namespace swinseg3d {

template <typename T>
Tensor<T> ParameterFactory<T>::add(const std::string& name, Shape shape, std::vector<T> data) {
  auto t = Tensor<T>::from_data(std::move(shape), std::move(data), true);
  sink_.push_back({name, t});
  return t;
}

template <typename T>
Tensor<T> ParameterFactory<T>::truncated_normal(const std::string& name, Shape shape, double std) {
  std::normal_distribution<double> dist(0.0, std);
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) {
    double s;
    do {
      s = dist(rng_);
    } while (std::abs(s) > 2.0 * std);
    v = static_cast<T>(s);
  }
  return add(name, std::move(shape), std::move(data));
}

template <typename T>
Tensor<T> ParameterFactory<T>::fan_in_uniform(const std::string& name, Shape shape, std::size_t fan_in,
                                              double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(dist(rng_));
  return add(name, std::move(shape), std::move(data));
}

template <typename T>
Tensor<T> ParameterFactory<T>::constant(const std::string& name, Shape shape, T value) {
  const std::size_t n = shape_numel(shape);
  return add(name, std::move(shape), std::vector<T>(n, value));
}

template <typename T>
LinearLayer<T>::LinearLayer(ParameterFactory<T>& f, const std::string& name, std::size_t in, std::size_t out,
                            bool with_bias)
    : weight(f.truncated_normal(name + ".weight", {out, in})) {
  if (with_bias) bias = f.constant(name + ".bias", {out}, T(0));
}

template <typename T>
LayerNormLayer<T>::LayerNormLayer(ParameterFactory<T>& f, const std::string& name, std::size_t dim)
    : gamma(f.constant(name + ".gamma", {dim}, T(1))), beta(f.constant(name + ".beta", {dim}, T(0))) {}

template <typename T>
Tensor<T> LayerNormLayer<T>::channels(const Tensor<T>& x) const {
  return ops::permute(ops::layer_norm(ops::permute(x, {1, 2, 3, 0}), gamma, beta), {3, 0, 1, 2});
}

template <typename T>
Conv3dLayer<T>::Conv3dLayer(ParameterFactory<T>& f, const std::string& name, std::size_t in, std::size_t out,
                            ops::Index3 kernel, ops::Index3 stride_, ops::Index3 padding_, double gain)
    : stride(stride_), padding(padding_) {
  const std::size_t fan_in = in * kernel[0] * kernel[1] * kernel[2];
  weight = f.fan_in_uniform(name + ".weight", {out, in, kernel[0], kernel[1], kernel[2]}, fan_in, gain);
  bias = f.fan_in_uniform(name + ".bias", {out}, fan_in);
}

template <typename T>
TransposedConv3dLayer<T>::TransposedConv3dLayer(ParameterFactory<T>& f, const std::string& name, std::size_t in,
                                                std::size_t out, ops::Index3 kernel, double gain)
    : stride(kernel) {
  // With stride == kernel every output voxel sums exactly `in` products.
  const std::size_t fan_in = in;
  weight = f.fan_in_uniform(name + ".weight", {in, out, kernel[0], kernel[1], kernel[2]}, fan_in, gain);
  bias = f.fan_in_uniform(name + ".bias", {out}, fan_in);
}

template <typename T>
WindowAttention<T>::WindowAttention(ParameterFactory<T>& f, const std::string& name, std::size_t dim_,
                                    std::size_t heads_, std::size_t window_size, bool qkv_bias, bool relative_bias)
    : qkv(f, name + ".qkv", dim_, 3 * dim_, qkv_bias),
      proj(f, name + ".proj", dim_, dim_, true),
      dim(dim_),
      heads(heads_),
      max_window{window_size, window_size, window_size} {
  if (dim % heads != 0) throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by heads");
  if (relative_bias) {
    const std::size_t span = 2 * window_size - 1;
    relative_bias_table = f.truncated_normal(name + ".relative_bias", {span * span * span, heads});
  }
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> WindowAttention<T>::weights_and_values(const Tensor<T>& windows,
                                                                        const Tensor<T>& mask,
                                                                        const Extent3& window) const {
  const std::size_t nw = windows.dim(0), n = windows.dim(1), c = windows.dim(2);
  if (c != dim) throw ShapeError("window attention: channel " + std::to_string(c) + " != " + std::to_string(dim));
  const std::size_t hd = c / heads;
  auto qkv_t = ops::reshape(qkv(windows), {nw, n, 3, heads, hd});
  qkv_t = ops::permute(qkv_t, {2, 0, 3, 1, 4});  // [3, nw, heads, n, hd]
  auto pick = [&](std::size_t i) { return ops::reshape(ops::slice(qkv_t, 0, i, 1), {nw, heads, n, hd}); };
  const auto q = pick(0), k = pick(1), v = pick(2);
  auto logits = ops::scale(ops::matmul(q, ops::transpose_last2(k)), T(1) / std::sqrt(static_cast<T>(hd)));
  if (relative_bias_table.defined()) {
    const std::size_t sh = 2 * max_window[1] - 1, sw = 2 * max_window[2] - 1;
    std::vector<std::array<long, 3>> coords;
    for (std::size_t z = 0; z < window[0]; ++z)
      for (std::size_t y = 0; y < window[1]; ++y)
        for (std::size_t x = 0; x < window[2]; ++x) coords.push_back({long(z), long(y), long(x)});
    std::vector<std::size_t> rows;
    rows.reserve(n * n);
    for (const auto& a : coords)
      for (const auto& b : coords) {
        const auto dz = std::size_t(a[0] - b[0] + long(max_window[0]) - 1);
        const auto dy = std::size_t(a[1] - b[1] + long(max_window[1]) - 1);
        const auto dx = std::size_t(a[2] - b[2] + long(max_window[2]) - 1);
        rows.push_back((dz * sh + dy) * sw + dx);
      }
    auto bias = ops::index_rows(relative_bias_table, rows);               // [n*n, heads]
    bias = ops::reshape(ops::permute(bias, {1, 0}), {1, heads, n, n});
    logits = ops::add(logits, bias);
  }
  if (mask.defined()) logits = ops::add(logits, mask);
  return {ops::softmax(logits, 3), v};
}

template <typename T>
Tensor<T> WindowAttention<T>::weights(const Tensor<T>& windows, const Tensor<T>& mask, const Extent3& window) const {
  return weights_and_values(windows, mask, window).first;
}

template <typename T>
Tensor<T> WindowAttention<T>::operator()(const Tensor<T>& windows, const Tensor<T>& mask,
                                         const Extent3& window) const {
  const auto [p, v] = weights_and_values(windows, mask, window);
  const std::size_t nw = windows.dim(0), n = windows.dim(1), c = windows.dim(2);
  auto out = ops::matmul(p, v);  // [nw, heads, n, hd]
  out = ops::reshape(ops::permute(out, {0, 2, 1, 3}), {nw, n, c});
  return proj(out);
}

template <typename T>
SwinBlock<T>::SwinBlock(ParameterFactory<T>& f, const std::string& name, std::size_t dim, std::size_t heads,
                        std::size_t window_size_, std::size_t mlp_ratio, bool shifted_, bool qkv_bias,
                        bool relative_bias)
    : norm1(f, name + ".norm1", dim),
      norm2(f, name + ".norm2", dim),
      attn(f, name + ".attn", dim, heads, window_size_, qkv_bias, relative_bias),
      fc1(f, name + ".mlp.fc1", dim, mlp_ratio * dim),
      fc2(f, name + ".mlp.fc2", mlp_ratio * dim, dim),
      window_size(window_size_),
      shifted(shifted_) {}

template <typename T>
Tensor<T> SwinBlock<T>::operator()(const Tensor<T>& x) const {
  if (x.rank() != 4) throw ShapeError("swin block expects [C,D,H,W], got " + shape_str(x.shape()));
  const Extent3 dims{x.dim(1), x.dim(2), x.dim(3)};
  const WindowPlan plan = plan_windows(dims, window_size, shifted);

  // Maps whose extent is not a window multiple are zero-padded after the norm
  // and cropped after attention.
  auto h = norm1.channels(x);
  h = ops::pad_end(h, {0, plan.padded[0] - dims[0], plan.padded[1] - dims[1], plan.padded[2] - dims[2]});
  const bool any_shift = plan.shift[0] || plan.shift[1] || plan.shift[2];
  Tensor<T> mask;
  if (any_shift) {
    h = cyclic_shift(h, plan.shift);
    mask = build_attention_mask(plan.padded, plan.window, plan.shift).template as_tensor<T>();
  }
  auto w = attn(window_partition(h, plan.window), mask, plan.window);
  h = window_reverse(w, plan.padded, plan.window);
  if (any_shift) h = cyclic_unshift(h, plan.shift);
  for (int a = 0; a < 3; ++a)
    if (plan.padded[a] != dims[a]) h = ops::slice(h, a + 1, 0, dims[a]);
  auto y = ops::add(x, h);

  auto t = ops::permute(y, {1, 2, 3, 0});
  t = ops::add(t, fc2(ops::gelu(fc1(norm2(t)))));
  return ops::permute(t, {3, 0, 1, 2});
}

template <typename T>
SkipFuse<T>::SkipFuse(ParameterFactory<T>& f, const std::string& name, std::size_t dim)
    : proj(f, name + ".proj", 2 * dim, dim, {1, 1, 1}, {1, 1, 1}) {}

template <typename T>
Tensor<T> SkipFuse<T>::operator()(const Tensor<T>& decoder, const Tensor<T>& encoder) const {
  if (decoder.shape() != encoder.shape()) {
    throw ShapeError("skip fuse: decoder " + shape_str(decoder.shape()) + " vs encoder " +
                     shape_str(encoder.shape()));
  }
  return proj(ops::concat<T>({decoder, encoder}, 0));
}

template class ParameterFactory<float>;
template class ParameterFactory<double>;
template struct LinearLayer<float>;
template struct LinearLayer<double>;
template struct LayerNormLayer<float>;
template struct LayerNormLayer<double>;
template struct Conv3dLayer<float>;
template struct Conv3dLayer<double>;
template struct TransposedConv3dLayer<float>;
template struct TransposedConv3dLayer<double>;
template struct WindowAttention<float>;
template struct WindowAttention<double>;
template struct SwinBlock<float>;
template struct SwinBlock<double>;
template struct SkipFuse<float>;
template struct SkipFuse<double>;

}  // namespace swinseg3d
