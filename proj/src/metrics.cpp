#include <cmath>
#include <string>

#include "swinseg3d/errors.hpp"
#include "swinseg3d/losses.hpp"

namespace swinseg3d {

OverlapCounts overlap(std::span<const float> pred, std::span<const float> truth) {
  if (pred.size() != truth.size()) {
    throw ContractError("overlap: prediction has " + std::to_string(pred.size()) + " voxels, truth has " +
                        std::to_string(truth.size()));
  }
  OverlapCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const float p = pred[i], g = truth[i];
    if ((p != 0.0f && p != 1.0f) || (g != 0.0f && g != 1.0f)) {
      throw ContractError("overlap: non-binary value at voxel " + std::to_string(i));
    }
    const bool pp = p == 1.0f, gg = g == 1.0f;
    c.intersection += pp && gg;
    c.predicted += pp;
    c.truth += gg;
    c.union_count += pp || gg;
  }
  return c;
}

double dice(const OverlapCounts& c) {
  const std::size_t denom = c.predicted + c.truth;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.intersection) / static_cast<double>(denom);
}

double iou(const OverlapCounts& c) {
  if (c.union_count == 0) return 1.0;
  return static_cast<double>(c.intersection) / static_cast<double>(c.union_count);
}

double dice(std::span<const float> pred, std::span<const float> truth) { return dice(overlap(pred, truth)); }
double iou(std::span<const float> pred, std::span<const float> truth) { return iou(overlap(pred, truth)); }

std::vector<float> binarize(std::span<const float> logits, double threshold) {
  std::vector<float> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    out[i] = p >= threshold ? 1.0f : 0.0f;
  }
  return out;
}

}  // namespace swinseg3d
