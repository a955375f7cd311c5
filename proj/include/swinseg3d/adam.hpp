#pragma once

#include <cstdint>
#include <vector>

#include "swinseg3d/tensor.hpp"

namespace swinseg3d {

/// Adam moments for an ordered parameter list. Buffers are created lazily on
/// the first step so a default-constructed state is valid.
template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

/// One bias-corrected Adam update of `params` using their accumulated grads.
/// Parameters without a gradient buffer are treated as having zero gradient.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state);

/// Same update on raw buffers; the tensor overload forwards here.
template <typename T>
void adam_step(std::vector<std::vector<T>*>& params, const std::vector<const std::vector<T>*>& grads,
               AdamState<T>& state);

}  // namespace swinseg3d
