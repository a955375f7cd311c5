#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "swinseg3d/tensor.hpp"

namespace swinseg3d {

struct FocalConfig {
  double alpha = 0.25;  // weight of positive voxels; negatives get 1 - alpha
  double gamma = 2.0;
  void validate() const;
};

/// Probability clamp used inside the focal log term.
inline constexpr double kFocalClamp = 1e-7;

/// Mean per-voxel binary focal loss of `logits` against a 0/1 `target` of the
/// same shape. Differentiable in `logits`.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, const Tensor<T>& target, const FocalConfig& cfg = {});

/// Same value on plain buffers, accumulated in double.
double focal_loss_value(std::span<const float> logits, std::span<const float> target, const FocalConfig& cfg = {});

struct OverlapCounts {
  std::size_t intersection = 0;
  std::size_t predicted = 0;
  std::size_t truth = 0;
  std::size_t union_count = 0;
};

/// Counts over two binary masks. Throws ContractError on shape mismatch or a
/// value other than 0 or 1.
OverlapCounts overlap(std::span<const float> pred, std::span<const float> truth);

/// 2|P&G| / (|P|+|G|); two empty masks score 1.
double dice(const OverlapCounts& c);
/// |P&G| / |P|G|; two empty masks score 1.
double iou(const OverlapCounts& c);
double dice(std::span<const float> pred, std::span<const float> truth);
double iou(std::span<const float> pred, std::span<const float> truth);

/// 1 where sigmoid(logit) >= threshold, else 0.
std::vector<float> binarize(std::span<const float> logits, double threshold = 0.5);

}  // namespace swinseg3d
