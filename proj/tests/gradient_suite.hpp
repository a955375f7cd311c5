#pragma once

#include <functional>
#include <string>
#include <vector>

#include "swinseg3d/layers.hpp"
#include "swinseg3d/losses.hpp"
#include "swinseg3d/model.hpp"
#include "swinseg3d/ops.hpp"
#include "swinseg3d/window.hpp"
#include "test_support.hpp"

namespace testsupport {

struct GradCase {
  std::string name;
  std::vector<Tensor<double>> inputs;
  std::function<Tensor<double>()> loss;
};

/// One case per differentiable operation and per composite layer.
inline std::vector<GradCase> gradient_cases() {
  namespace ops = swinseg3d::ops;
  using swinseg3d::Extent3;
  std::vector<GradCase> cases;
  std::uint64_t seed = 100;
  auto rt = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(std::move(s), seed++, lo, hi); };
  auto add = [&](std::string name, std::vector<Tensor<double>> in,
                 std::function<Tensor<double>(const std::vector<Tensor<double>>&)> f) {
    const std::uint64_t w = seed++;
    cases.push_back({std::move(name), in, [in, f, w] { return weighted_sum(f(in), w); }});
  };

  add("add_broadcast", {rt({2, 3, 4}), rt({3, 1})}, [](auto& v) { return ops::add(v[0], v[1]); });
  add("sub_broadcast", {rt({2, 3}), rt({3})}, [](auto& v) { return ops::sub(v[0], v[1]); });
  add("mul_broadcast", {rt({4, 3}), rt({4, 1})}, [](auto& v) { return ops::mul(v[0], v[1]); });
  add("scale", {rt({5})}, [](auto& v) { return ops::scale(v[0], -1.7); });
  add("add_scalar", {rt({5})}, [](auto& v) { return ops::add_scalar(v[0], 0.3); });
  add("sum", {rt({3, 4})}, [](auto& v) { return ops::sum(ops::mul(v[0], v[0])); });
  add("mean", {rt({3, 4})}, [](auto& v) { return ops::mean(ops::mul(v[0], v[0])); });
  add("gelu", {rt({20}, -3, 3)}, [](auto& v) { return ops::gelu(v[0]); });
  add("sigmoid", {rt({20}, -4, 4)}, [](auto& v) { return ops::sigmoid(v[0]); });
  add("relu", {rt({20})}, [](auto& v) { return ops::relu(v[0]); });
  add("softmax_last", {rt({3, 5}, -2, 2)}, [](auto& v) { return ops::softmax(v[0], 1); });
  add("softmax_middle", {rt({2, 4, 3}, -2, 2)}, [](auto& v) { return ops::softmax(v[0], 1); });
  add("layer_norm", {rt({4, 6}), rt({6}, 0.5, 1.5), rt({6})},
      [](auto& v) { return ops::layer_norm(v[0], v[1], v[2]); });
  add("matmul_batched", {rt({2, 3, 4}), rt({4, 5})}, [](auto& v) { return ops::matmul(v[0], v[1]); });
  add("linear_bias", {rt({2, 3, 4}), rt({5, 4}), rt({5})}, [](auto& v) { return ops::linear(v[0], v[1], v[2]); });
  add("linear_nobias", {rt({6, 4}), rt({3, 4})},
      [](auto& v) { return ops::linear(v[0], v[1], Tensor<double>()); });
  add("reshape_permute", {rt({2, 3, 4})},
      [](auto& v) { return ops::permute(ops::reshape(v[0], {6, 4}), {1, 0}); });
  add("transpose_last2", {rt({2, 3, 4})}, [](auto& v) { return ops::transpose_last2(v[0]); });
  add("concat", {rt({2, 3}), rt({2, 2})}, [](auto& v) { return ops::concat<double>({v[0], v[1]}, 1); });
  add("slice", {rt({4, 5})}, [](auto& v) { return ops::slice(v[0], 1, 1, 3); });
  add("pad_end", {rt({2, 3})}, [](auto& v) { return ops::pad_end(v[0], {1, 2}); });
  add("roll", {rt({3, 4})}, [](auto& v) { return ops::roll(v[0], {1, -3}); });
  add("index_rows", {rt({4, 3})}, [](auto& v) { return ops::index_rows(v[0], {3, 0, 3, 1}); });
  add("conv3d_pad", {rt({2, 4, 5, 3}), rt({3, 2, 3, 3, 3}), rt({3})},
      [](auto& v) { return ops::conv3d(v[0], v[1], v[2], {1, 1, 1}, {1, 1, 1}); });
  add("conv3d_stride", {rt({2, 8, 8, 4}), rt({4, 2, 2, 2, 2}), rt({4})},
      [](auto& v) { return ops::conv3d(v[0], v[1], v[2], {2, 2, 2}, {0, 0, 0}); });
  add("transposed_conv3d", {rt({4, 2, 3, 2}), rt({4, 3, 2, 2, 2}), rt({3})},
      [](auto& v) { return ops::transposed_conv3d(v[0], v[1], v[2], {2, 2, 2}); });
  add("transposed_conv3d_k4", {rt({2, 2, 2, 1}), rt({2, 3, 4, 4, 4}), rt({3})},
      [](auto& v) { return ops::transposed_conv3d(v[0], v[1], v[2], {4, 4, 4}); });
  add("trilinear_upsample", {rt({2, 2, 3, 2})}, [](auto& v) { return ops::trilinear_upsample(v[0], 2); });
  add("max_pool2", {rt({2, 4, 4, 2})}, [](auto& v) { return ops::max_pool2(v[0]); });
  add("window_partition", {rt({3, 4, 4, 2})},
      [](auto& v) { return swinseg3d::window_partition(v[0], Extent3{2, 2, 2}); });
  add("window_reverse", {rt({4, 8, 3})},
      [](auto& v) { return swinseg3d::window_reverse(v[0], Extent3{4, 4, 2}, Extent3{2, 2, 2}); });
  add("cyclic_shift", {rt({2, 4, 4, 4})},
      [](auto& v) { return swinseg3d::cyclic_shift(v[0], Extent3{1, 1, 1}); });

  {
    const auto z = rt({3, 4, 5}, -4, 4);
    auto y = random_tensor({3, 4, 5}, seed++, 0, 1, false);
    for (auto& t : y.mutable_data()) t = t < 0.3 ? 1.0 : 0.0;
    cases.push_back({"focal_loss", {z}, [z, y] { return swinseg3d::focal_loss(z, y); }});
  }

  // Composite layers. Parameters are gathered from the factory sink.
  auto layer_case = [&](std::string name, auto make, Shape in_shape) {
    auto sink = std::make_shared<std::vector<swinseg3d::NamedParameter<double>>>();
    swinseg3d::ParameterFactory<double> f(seed++, *sink);
    auto layer = std::make_shared<decltype(make(f))>(make(f));
    // Spread weights beyond the tiny default init so every path carries signal.
    for (auto& p : *sink) {
      std::mt19937_64 rng(seed++);
      std::uniform_real_distribution<double> d(-0.5, 0.5);
      for (auto& v : p.value.mutable_data()) v += d(rng);
    }
    auto x = rt(std::move(in_shape));
    std::vector<Tensor<double>> inputs{x};
    for (auto& p : *sink) inputs.push_back(p.value);
    const std::uint64_t w = seed++;
    cases.push_back({std::move(name), inputs, [layer, x, w, sink] { return weighted_sum((*layer)(x), w); }});
  };
  layer_case("swin_block_plain",
             [](auto& f) { return swinseg3d::SwinBlock<double>(f, "b", 4, 2, 2, 2, false, true, false); },
             {4, 4, 4, 2});
  layer_case("swin_block_shifted_masked",
             [](auto& f) { return swinseg3d::SwinBlock<double>(f, "b", 4, 2, 2, 2, true, true, true); },
             {4, 4, 4, 4});
  layer_case("swin_block_padded",
             [](auto& f) { return swinseg3d::SwinBlock<double>(f, "b", 4, 1, 2, 2, true, false, false); },
             {4, 3, 5, 4});
  return cases;
}

/// Miniature network at the smallest legal input, f64, loss = sum(out * R).
struct ModelGradCase {
  std::unique_ptr<swinseg3d::SegmentationModel<double>> model;
  GradCase grad;
};

inline ModelGradCase model_gradient_case(swinseg3d::Architecture arch, Shape input_shape, std::uint64_t seed) {
  swinseg3d::ModelConfig cfg = swinseg3d::miniature_config();
  cfg.arch = arch;
  cfg.seed = seed;
  ModelGradCase c;
  c.model = swinseg3d::build_model<double>(cfg);
  const auto x = random_tensor(std::move(input_shape), seed + 1, 0.0, 1.0);
  std::vector<Tensor<double>> inputs{x};
  for (const auto& p : c.model->parameters()) inputs.push_back(p.value);
  const auto* m = c.model.get();
  c.grad = {std::string("model_") + swinseg3d::architecture_name(arch), inputs,
            [m, x, seed] { return weighted_sum(m->forward(x), seed + 2); }};
  return c;
}

}  // namespace testsupport
