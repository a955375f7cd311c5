#include <algorithm>
#include <cmath>
#include <string>

#include "swinseg3d/errors.hpp"
#include "swinseg3d/losses.hpp"

namespace swinseg3d {

void FocalConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("focal alpha must lie in (0,1), got " + std::to_string(alpha));
  if (!(gamma >= 0.0)) throw ConfigError("focal gamma must be >= 0, got " + std::to_string(gamma));
}

namespace {

struct FocalTerm {
  double loss;
  double dlogit;
};

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Loss of one voxel and its derivative with respect to the logit.
FocalTerm focal_term(double z, bool positive, const FocalConfig& cfg) {
  const double p = stable_sigmoid(z);
  const double pt_raw = positive ? p : 1.0 - p;
  const double pt = std::clamp(pt_raw, kFocalClamp, 1.0 - kFocalClamp);
  const double w = positive ? cfg.alpha : 1.0 - cfg.alpha;
  const double q = 1.0 - pt;
  const double mod = cfg.gamma == 0.0 ? 1.0 : std::pow(q, cfg.gamma);
  const double loss = -w * mod * std::log(pt);
  if (pt != pt_raw) return {loss, 0.0};
  const double dmod = cfg.gamma == 0.0 ? 0.0 : cfg.gamma * std::pow(q, cfg.gamma - 1.0);
  const double dloss_dpt = w * (dmod * std::log(pt) - mod / pt);
  const double dpt_dz = (positive ? 1.0 : -1.0) * p * (1.0 - p);
  return {loss, dloss_dpt * dpt_dz};
}

bool binary_value(double v) { return v == 0.0 || v == 1.0; }

}  // namespace

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, const Tensor<T>& target, const FocalConfig& cfg) {
  cfg.validate();
  if (logits.shape() != target.shape()) {
    throw ContractError("focal_loss: logits " + shape_str(logits.shape()) + " vs target " +
                        shape_str(target.shape()));
  }
  const auto z = logits.data();
  const auto y = target.data();
  const std::size_t n = z.size();
  std::vector<T> dz(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!binary_value(y[i])) throw ContractError("focal_loss: target is not binary at voxel " + std::to_string(i));
    const FocalTerm t = focal_term(z[i], y[i] == T(1), cfg);
    total += t.loss;
    dz[i] = static_cast<T>(t.dlogit / static_cast<double>(n));
  }
  return Tensor<T>::make_result({1}, {static_cast<T>(total / static_cast<double>(n))}, {logits},
                                [dz = std::move(dz)](Node<T>& out) {
                                  auto& p = *out.parents[0];
                                  for (std::size_t i = 0; i < dz.size(); ++i) p.grad[i] += out.grad[0] * dz[i];
                                });
}

double focal_loss_value(std::span<const float> logits, std::span<const float> target, const FocalConfig& cfg) {
  cfg.validate();
  if (logits.size() != target.size()) {
    throw ContractError("focal_loss: " + std::to_string(logits.size()) + " logits vs " +
                        std::to_string(target.size()) + " target voxels");
  }
  if (logits.empty()) throw ContractError("focal_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!binary_value(target[i])) throw ContractError("focal_loss: target is not binary at voxel " + std::to_string(i));
    total += focal_term(logits[i], target[i] == 1.0f, cfg).loss;
  }
  return total / static_cast<double>(logits.size());
}

template Tensor<float> focal_loss(const Tensor<float>&, const Tensor<float>&, const FocalConfig&);
template Tensor<double> focal_loss(const Tensor<double>&, const Tensor<double>&, const FocalConfig&);

}  // namespace swinseg3d
