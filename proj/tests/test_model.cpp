#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "swinseg3d/errors.hpp"
#include "swinseg3d/model.hpp"
#include "test_support.hpp"

using namespace swinseg3d;

namespace {

// Hand count of one transformer block of width c: two norms, qkv, proj, two MLP linears.
std::size_t block_params(std::size_t c, std::size_t r, bool qkv_bias) {
  return 2 * 2 * c + (3 * c * c + (qkv_bias ? 3 * c : 0)) + (c * c + c) + (c * r * c + r * c) + (r * c * c + c);
}

std::size_t hand_count(std::size_t c, std::size_t r, std::size_t e, std::size_t patch) {
  const std::size_t k = patch * patch * patch;
  std::size_t n = 2 * c * k + c;                                           // embed
  n += 2 * block_params(c, r, true) * 2;                                   // encoder1 + decoder1
  n += 2 * block_params(2 * c, r, true) * 2;                               // encoder2 + decoder2
  n += 2 * block_params(4 * c, r, true);                                   // bottleneck
  n += (c * 2 * c * 8 + 2 * c) + (2 * c * 4 * c * 8 + 4 * c);              // downs
  n += (4 * c * 2 * c * 8 + 2 * c) + (2 * c * c * 8 + c);                  // ups
  n += (4 * c * 2 * c + 2 * c) + (2 * c * c + c);                          // fuses
  n += c * e * k + e;                                                      // expansion
  n += e + 1;                                                              // head
  return n;
}

Tensor<float> random_input(Shape s, std::uint64_t seed) {
  const auto d = testsupport::random_tensor(std::move(s), seed, 0.0, 1.0, false);
  return Tensor<float>::from_data(d.shape(), std::vector<float>(d.values().begin(), d.values().end()), false);
}

}  // namespace

TEST(ParamCount, ReferenceMatchesHandCount) {
  const auto cfg = reference_config();
  EXPECT_EQ(hand_count(32, 4, 32, 4), 891'489u);
  EXPECT_EQ(param_count(cfg), 891'489u);
  EXPECT_EQ(build_model<float>(cfg)->parameter_count(), 891'489u);
}

TEST(ParamCount, MiniatureMatchesHandCount) {
  const auto cfg = miniature_config();
  EXPECT_EQ(param_count(cfg), hand_count(8, 4, 256, 4));
  EXPECT_EQ(build_model<double>(cfg)->parameter_count(), param_count(cfg));
}

TEST(ParamCount, BreakdownSumsToTotalAndVariantsMoveIt) {
  for (auto cfg : {reference_config(), miniature_config()}) {
    std::size_t sum = 0;
    for (const auto& [name, n] : param_breakdown(cfg)) sum += n;
    EXPECT_EQ(sum, param_count(cfg));
  }
  auto cfg = reference_config();
  cfg.mlp_ratio = 2;
  EXPECT_EQ(param_count(cfg), 891'489u - 214'272u);
  cfg = reference_config();
  cfg.qkv_bias = false;
  EXPECT_EQ(param_count(cfg), 891'489u - 3 * (2 * 32 * 2 + 2 * 64 * 2 + 2 * 128));
  cfg = reference_config();
  cfg.relative_position_bias = true;
  // Table of 27 offsets per head, heads 1,2,4 over 10 blocks.
  EXPECT_EQ(param_count(cfg), 891'489u + 27 * (4 * 1 + 4 * 2 + 2 * 4));
  cfg = reference_config();
  cfg.upsample_mode = UpsampleMode::Trilinear;
  EXPECT_EQ(param_count(cfg), 891'489u - (128 * 64 * 8 + 64 * 32 * 8) + (128 * 64 + 64 * 32));
  cfg.arch = Architecture::UNet3D;
  EXPECT_EQ(build_model<float>(cfg)->parameter_count(), param_count(cfg));
}

TEST(ParamCount, ReportStatesBothTotals) {
  const auto r = parameter_report();
  EXPECT_NE(r.find("891489"), std::string::npos);
  EXPECT_NE(r.find("810721"), std::string::npos);
  EXPECT_NE(r.find("+80768"), std::string::npos);
  EXPECT_NE(r.find("mlp_ratio"), std::string::npos);
  EXPECT_NE(r.find("heads"), std::string::npos);
  EXPECT_NE(r.find("embed_patch"), std::string::npos);
}

TEST(Shapes, MiniatureStageLadder) {
  const SwinUNet3D<float> m(miniature_config());
  const auto x = random_input({2, 16, 64, 64}, 1);
  const auto e = m.patch_embed(x);
  EXPECT_EQ(e.shape(), (Shape{8, 4, 16, 16}));
  const auto d1 = m.downsample(0, e);
  EXPECT_EQ(d1.shape(), (Shape{16, 2, 8, 8}));
  const auto d2 = m.downsample(1, d1);
  EXPECT_EQ(d2.shape(), (Shape{32, 1, 4, 4}));
  EXPECT_EQ(m.upsample(0, d2).shape(), d1.shape());
  EXPECT_EQ(m.upsample(1, d1).shape(), e.shape());
  EXPECT_EQ(m.forward(x).shape(), (Shape{1, 16, 64, 64}));
}

TEST(Shapes, ReferenceMapsFullResolutionPatch) {
  const auto model = build_model<float>(reference_config());
  NoGradGuard g;
  const auto y = model->forward(random_input({2, 16, 400, 400}, 2));
  EXPECT_EQ(y.shape(), (Shape{1, 16, 400, 400}));
  for (float v : y.values()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Shapes, BaselineMatchesSegmentationContract) {
  auto cfg = miniature_config();
  cfg.arch = Architecture::UNet3D;
  const auto m = build_model<float>(cfg);
  EXPECT_EQ(m->forward(random_input({2, 16, 32, 48}, 3)).shape(), (Shape{1, 16, 32, 48}));
}

TEST(Shapes, InputContractRejectsBadShapes) {
  const auto m = build_model<float>(miniature_config());
  EXPECT_NO_THROW(m->check_input({2, 16, 64, 64}));
  EXPECT_THROW(m->check_input({2, 15, 64, 64}), ShapeError);
  EXPECT_THROW(m->check_input({2, 16, 60, 64}), ShapeError);
  EXPECT_THROW(m->check_input({3, 16, 64, 64}), ShapeError);
  EXPECT_THROW(m->check_input({16, 64, 64}), ShapeError);
  EXPECT_THROW(m->forward(random_input({2, 8, 64, 64}, 1)), ShapeError);
}

TEST(Model, EqualConfigsGiveIdenticalWeightsAndOutputs) {
  auto cfg = miniature_config();
  cfg.seed = 42;
  const auto a = build_model<float>(cfg), b = build_model<float>(cfg);
  ASSERT_EQ(a->parameters().size(), b->parameters().size());
  for (std::size_t i = 0; i < a->parameters().size(); ++i) {
    EXPECT_EQ(a->parameters()[i].name, b->parameters()[i].name);
    EXPECT_EQ(a->parameters()[i].value.values(), b->parameters()[i].value.values());
  }
  const auto x = random_input({2, 16, 32, 32}, 5);
  EXPECT_EQ(a->forward(x).values(), b->forward(x).values());
  EXPECT_EQ(a->forward(x).values(), a->forward(x).values());
  cfg.seed = 43;
  EXPECT_NE(build_model<float>(cfg)->parameters()[0].value.values(), a->parameters()[0].value.values());
}

TEST(Model, HeadBiasEncodesLesionPrior) {
  const auto cfg = miniature_config();
  const auto m = build_model<double>(cfg);
  const auto& last = m->parameters().back();
  EXPECT_EQ(last.name, "head.bias");
  EXPECT_NEAR(last.value.at(0), -std::log((1 - cfg.head_prior) / cfg.head_prior), 1e-12);
}

TEST(Model, ParameterNamesAreUnique) {
  for (auto arch : {Architecture::SwinUNet3D, Architecture::UNet3D}) {
    auto cfg = miniature_config();
    cfg.arch = arch;
    const auto m = build_model<float>(cfg);
    std::set<std::string> names;
    for (const auto& p : m->parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  }
}

TEST(Model, ConfigValidationRejectsIndivisibleHeads) {
  auto cfg = miniature_config();
  cfg.heads_per_stage = {3, 1, 1};
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(build_model<float>(cfg), ConfigError);
  cfg = miniature_config();
  cfg.head_prior = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Model, TensorConversionRoundTrips) {
  ChannelVolume v(2, 3, 4, 5);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(i) * 0.25f;
  const auto t = to_tensor<float>(v);
  EXPECT_EQ(t.shape(), (Shape{2, 3, 4, 5}));
  EXPECT_EQ(from_tensor(t), v);
  EXPECT_EQ(from_tensor(to_tensor<double>(v)), v);
}
