#include "swinseg3d/adam.hpp"

#include <cmath>

namespace swinseg3d {

template <typename T>
void adam_step(std::vector<std::vector<T>*>& params, const std::vector<const std::vector<T>*>& grads,
               AdamState<T>& state) {
  if (grads.size() != params.size()) throw ContractError("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->size(), T(0));
      state.v.emplace_back(p->size(), T(0));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: state tracks " + std::to_string(state.m.size()) + " buffers, got " +
                        std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i]->size();
    if (state.m[i].size() != n || state.v[i].size() != n || (grads[i] && grads[i]->size() != n)) {
      throw ContractError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
  const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T g = grads[i] ? (*grads[i])[j] : T(0);
      m[j] = state.beta1 * m[j] + (T(1) - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (T(1) - state.beta2) * g * g;
      const T m_hat = m[j] / bc1;
      const T v_hat = v[j] / bc2;
      p[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  std::vector<std::vector<T>*> values;
  std::vector<const std::vector<T>*> grads;
  for (auto& t : params) {
    values.push_back(&t.node()->data);
    grads.push_back(t.has_grad() ? &t.node()->grad : nullptr);
  }
  adam_step(values, grads, state);
}

template void adam_step(std::vector<Tensor<float>>&, AdamState<float>&);
template void adam_step(std::vector<Tensor<double>>&, AdamState<double>&);
template void adam_step(std::vector<std::vector<float>*>&, const std::vector<const std::vector<float>*>&,
                        AdamState<float>&);
template void adam_step(std::vector<std::vector<double>*>&, const std::vector<const std::vector<double>*>&,
                        AdamState<double>&);

}  // namespace swinseg3d
