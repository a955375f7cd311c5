#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "swinseg3d/ops.hpp"
#include "swinseg3d/tensor.hpp"
#include "swinseg3d/window.hpp"

namespace swinseg3d {

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> value;
};

/// Creates and records trainable tensors in construction order, which is
/// also checkpoint order.
template <typename T>
class ParameterFactory {
 public:
  ParameterFactory(std::uint64_t seed, std::vector<NamedParameter<T>>& sink) : rng_(seed), sink_(sink) {}

  /// Normal(0, std) truncated to +-2 std.
  Tensor<T> truncated_normal(const std::string& name, Shape shape, double std = 0.02);
  /// Uniform(-gain/sqrt(fan_in), gain/sqrt(fan_in)).
  Tensor<T> fan_in_uniform(const std::string& name, Shape shape, std::size_t fan_in, double gain = 1.0);
  Tensor<T> constant(const std::string& name, Shape shape, T value);

 private:
  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> data);
  std::mt19937_64 rng_;
  std::vector<NamedParameter<T>>& sink_;
};

template <typename T>
struct LinearLayer {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out] or undefined
  LinearLayer() = default;
  LinearLayer(ParameterFactory<T>& f, const std::string& name, std::size_t in, std::size_t out, bool bias = true);
  Tensor<T> operator()(const Tensor<T>& x) const { return ops::linear(x, weight, bias); }
};

template <typename T>
struct LayerNormLayer {
  Tensor<T> gamma, beta;
  LayerNormLayer() = default;
  LayerNormLayer(ParameterFactory<T>& f, const std::string& name, std::size_t dim);
  Tensor<T> operator()(const Tensor<T>& x) const { return ops::layer_norm(x, gamma, beta); }
  /// Normalizes the channel axis of x[C,D,H,W].
  Tensor<T> channels(const Tensor<T>& x) const;
};

/// Init gains for fan-in uniform conv weights: unit-variance output for a
/// linear successor, for a rectifier successor, and for logit heads.
inline constexpr double kLinearGain = 1.7320508075688772;     // sqrt(3)
inline constexpr double kRectifierGain = 2.449489742783178;   // sqrt(6)
inline constexpr double kHeadGain = 1.0;

template <typename T>
struct Conv3dLayer {
  Tensor<T> weight, bias;
  ops::Index3 stride{1, 1, 1}, padding{0, 0, 0};
  Conv3dLayer() = default;
  Conv3dLayer(ParameterFactory<T>& f, const std::string& name, std::size_t in, std::size_t out,
              ops::Index3 kernel, ops::Index3 stride, ops::Index3 padding = {0, 0, 0},
              double gain = kLinearGain);
  Tensor<T> operator()(const Tensor<T>& x) const { return ops::conv3d(x, weight, bias, stride, padding); }
};

template <typename T>
struct TransposedConv3dLayer {
  Tensor<T> weight, bias;
  ops::Index3 stride{1, 1, 1};
  TransposedConv3dLayer() = default;
  TransposedConv3dLayer(ParameterFactory<T>& f, const std::string& name, std::size_t in, std::size_t out,
                        ops::Index3 kernel, double gain = kLinearGain);
  Tensor<T> operator()(const Tensor<T>& x) const { return ops::transposed_conv3d(x, weight, bias, stride); }
};

/// Multi-head self-attention applied independently to every window.
template <typename T>
struct WindowAttention {
  LinearLayer<T> qkv, proj;
  std::size_t dim = 0, heads = 1;
  Extent3 max_window{};
  Tensor<T> relative_bias_table;  // [(2wd-1)(2wh-1)(2ww-1), heads] when enabled

  WindowAttention() = default;
  WindowAttention(ParameterFactory<T>& f, const std::string& name, std::size_t dim, std::size_t heads,
                  std::size_t window_size, bool qkv_bias, bool relative_bias);

  /// windows[N, tokens, C] -> same shape. `mask` is undefined or [N,1,t,t].
  Tensor<T> operator()(const Tensor<T>& windows, const Tensor<T>& mask, const Extent3& window) const;
  /// Post-softmax attention weights [N, heads, tokens, tokens].
  Tensor<T> weights(const Tensor<T>& windows, const Tensor<T>& mask, const Extent3& window) const;

 private:
  std::pair<Tensor<T>, Tensor<T>> weights_and_values(const Tensor<T>& windows, const Tensor<T>& mask,
                                                     const Extent3& window) const;
};

/// LN -> (shifted) window attention -> residual, LN -> MLP -> residual.
template <typename T>
struct SwinBlock {
  LayerNormLayer<T> norm1, norm2;
  WindowAttention<T> attn;
  LinearLayer<T> fc1, fc2;
  std::size_t window_size = 2;
  bool shifted = false;

  SwinBlock() = default;
  SwinBlock(ParameterFactory<T>& f, const std::string& name, std::size_t dim, std::size_t heads,
            std::size_t window_size, std::size_t mlp_ratio, bool shifted, bool qkv_bias, bool relative_bias);

  /// x[C,D,H,W] -> same shape.
  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Concatenates decoder and encoder features on channels, projects 2C -> C.
template <typename T>
struct SkipFuse {
  Conv3dLayer<T> proj;
  SkipFuse() = default;
  SkipFuse(ParameterFactory<T>& f, const std::string& name, std::size_t dim);
  Tensor<T> operator()(const Tensor<T>& decoder, const Tensor<T>& encoder) const;
};

}  // namespace swinseg3d
