#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "swinseg3d/tensor.hpp"

// Differentiable operations. Every function records a backward rule when grad
// mode is on and an input requires a gradient.
namespace swinseg3d::ops {

using Index3 = std::array<std::size_t, 3>;

// ---- elementwise with numpy-style broadcasting -----------------------------
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);

// ---- reductions -------------------------------------------------------------
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

// ---- nonlinearities ---------------------------------------------------------
/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);

/// Softmax along `axis`, max-subtracted.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Normalizes over the last axis, then applies gamma/beta of that length.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

// ---- linear algebra ---------------------------------------------------------
/// [..., m, k] @ [..., k, n] with broadcast leading dims.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[..., in] * weight[out, in]^T + bias[out]. `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// ---- layout -----------------------------------------------------------------
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
template <typename T> Tensor<T> transpose_last2(const Tensor<T>& x);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);
/// Zero-pads `after[i]` entries at the end of axis i (after.size() == rank).
template <typename T> Tensor<T> pad_end(const Tensor<T>& x, const std::vector<std::size_t>& after);
/// Cyclic roll: out[(i + shift) mod n] = x[i] on each axis (shifts.size() == rank).
template <typename T> Tensor<T> roll(const Tensor<T>& x, const std::vector<long>& shifts);
/// Rows of a 2-D table selected by `rows`.
template <typename T>
Tensor<T> index_rows(const Tensor<T>& table, const std::vector<std::size_t>& rows);

// ---- volumetric -------------------------------------------------------------
/// x[C_in,D,H,W], kernel[C_out,C_in,kd,kh,kw], optional bias[C_out].
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Index3 stride, Index3 padding);

/// Adjoint of conv3d (no padding): x[C_in,D,H,W], kernel[C_in,C_out,kd,kh,kw],
/// output spatial (D-1)*stride + k per axis.
template <typename T>
Tensor<T> transposed_conv3d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                            Index3 stride);

/// x[C,D,H,W] -> [C,fD,fH,fW]; half-pixel centers, edge clamped.
template <typename T> Tensor<T> trilinear_upsample(const Tensor<T>& x, std::size_t factor);

/// 2x2x2 max pooling with stride 2 on x[C,D,H,W].
template <typename T> Tensor<T> max_pool2(const Tensor<T>& x);

}  // namespace swinseg3d::ops
