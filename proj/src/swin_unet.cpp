#include <cmath>
#include <iomanip>
#include <sstream>

#include "swinseg3d/model.hpp"

namespace swinseg3d {

namespace {

const char* kStageNames[] = {"encoder1", "encoder2", "bottleneck", "decoder2", "decoder1"};
// Stage index -> width index (0 = base_dim, 1 = 2x, 2 = 4x).
constexpr std::size_t kStageLevel[] = {0, 1, 2, 1, 0};

}  // namespace

template <typename T>
void SegmentationModel<T>::check_input(const Shape& shape) const {
  const auto mult = cfg_.input_multiple();
  bool ok = shape.size() == 4 && shape[0] == cfg_.in_channels;
  for (int a = 0; ok && a < 3; ++a) ok = shape[a + 1] > 0 && shape[a + 1] % mult[a] == 0;
  if (!ok) {
    throw ShapeError("model input " + shape_str(shape) + " must be [" + std::to_string(cfg_.in_channels) +
                     ",D,H,W] with D,H,W divisible by " + shape_str({mult[0], mult[1], mult[2]}));
  }
}

template <typename T>
std::vector<Tensor<T>> SegmentationModel<T>::parameter_tensors() const {
  std::vector<Tensor<T>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

template <typename T>
std::size_t SegmentationModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
void SegmentationModel<T>::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

template <typename T>
SwinUNet3D<T>::SwinUNet3D(const ModelConfig& cfg) : SegmentationModel<T>(cfg) {
  cfg.validate();
  if (cfg.arch != Architecture::SwinUNet3D) throw ConfigError("SwinUNet3D built from a non-swin config");
  ParameterFactory<T> f(cfg.seed, this->params_);
  const auto& ep = cfg.embed_patch;
  embed_ = Conv3dLayer<T>(f, "embed", cfg.in_channels, cfg.base_dim, ep, ep);

  auto make_stage = [&](std::size_t s) {
    const std::size_t level = kStageLevel[s];
    std::vector<SwinBlock<T>> blocks;
    for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b) {
      blocks.emplace_back(f, std::string(kStageNames[s]) + ".block" + std::to_string(b), cfg.stage_dim(level),
                          cfg.heads(level), cfg.window_size, cfg.mlp_ratio, b % 2 == 1, cfg.qkv_bias,
                          cfg.relative_position_bias);
    }
    stages_.push_back(std::move(blocks));
  };
  auto make_up = [&](std::size_t level_from, const std::string& name) {
    const std::size_t in = cfg.stage_dim(level_from), out = cfg.stage_dim(level_from - 1);
    if (cfg.upsample_mode == UpsampleMode::TransposedConv) {
      up_transposed_.emplace_back(f, name, in, out, ops::Index3{2, 2, 2});
    } else {
      up_pointwise_.emplace_back(f, name, in, out, ops::Index3{1, 1, 1}, ops::Index3{1, 1, 1});
    }
  };

  make_stage(0);
  down_.emplace_back(f, "down1", cfg.stage_dim(0), cfg.stage_dim(1), ops::Index3{2, 2, 2}, ops::Index3{2, 2, 2});
  make_stage(1);
  down_.emplace_back(f, "down2", cfg.stage_dim(1), cfg.stage_dim(2), ops::Index3{2, 2, 2}, ops::Index3{2, 2, 2});
  make_stage(2);
  make_up(2, "up2");
  fuse_.emplace_back(f, "fuse2", cfg.stage_dim(1));
  make_stage(3);
  make_up(1, "up1");
  fuse_.emplace_back(f, "fuse1", cfg.stage_dim(0));
  make_stage(4);
  const std::size_t e = cfg.effective_expand_dim();
  expand_ = TransposedConv3dLayer<T>(f, "expand", cfg.base_dim, e, ep, kRectifierGain);
  head_ = Conv3dLayer<T>(f, "head", e, cfg.out_classes, ops::Index3{1, 1, 1}, ops::Index3{1, 1, 1},
                         ops::Index3{0, 0, 0}, kHeadGain);
  if (cfg.head_prior > 0.0) {
    const T b = static_cast<T>(-std::log((1.0 - cfg.head_prior) / cfg.head_prior));
    for (auto& v : head_.bias.mutable_data()) v = b;
  }
}

template <typename T>
Tensor<T> SwinUNet3D<T>::upsample(std::size_t stage, const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(0) % 2 != 0) throw ShapeError("upsample needs an even channel count, got " + shape_str(x.shape()));
  if (this->cfg_.upsample_mode == UpsampleMode::TransposedConv) return up_transposed_.at(stage)(x);
  return up_pointwise_.at(stage)(ops::trilinear_upsample(x, 2));
}

template <typename T>
Tensor<T> SwinUNet3D<T>::run_stage(std::size_t stage, Tensor<T> x) const {
  for (const auto& b : stages_[stage]) x = b(x);
  return x;
}

template <typename T>
Tensor<T> SwinUNet3D<T>::forward(const Tensor<T>& input) const {
  this->check_input(input.shape());
  auto x = run_stage(0, embed_(input));
  const auto skip1 = x;
  x = run_stage(1, down_[0](x));
  const auto skip2 = x;
  x = run_stage(2, down_[1](x));
  x = run_stage(3, fuse_[0](upsample(0, x), skip2));
  x = run_stage(4, fuse_[1](upsample(1, x), skip1));
  return head_(ops::gelu(expand_(x)));
}

template <typename T>
std::unique_ptr<SegmentationModel<T>> build_model(const ModelConfig& cfg) {
  if (cfg.arch == Architecture::UNet3D) return std::make_unique<UNet3D<T>>(cfg);
  return std::make_unique<SwinUNet3D<T>>(cfg);
}

std::size_t param_count(const ModelConfig& cfg) { return build_model<float>(cfg)->parameter_count(); }

std::vector<std::pair<std::string, std::size_t>> param_breakdown(const ModelConfig& cfg) {
  const auto model = build_model<float>(cfg);
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& p : model->parameters()) {
    const std::string top = p.name.substr(0, p.name.find('.'));
    if (out.empty() || out.back().first != top) out.emplace_back(top, 0);
    out.back().second += p.value.numel();
  }
  return out;
}

std::string model_summary(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "model: " << architecture_name(cfg.arch) << '\n';
  if (cfg.arch == Architecture::SwinUNet3D) {
    os << "  base_dim=" << cfg.base_dim << " window=" << cfg.window_size << " embed_patch="
       << cfg.embed_patch[0] << 'x' << cfg.embed_patch[1] << 'x' << cfg.embed_patch[2]
       << " heads=" << cfg.heads(0) << ',' << cfg.heads(1) << ',' << cfg.heads(2) << " mlp_ratio=" << cfg.mlp_ratio
       << " upsample=" << upsample_mode_name(cfg.upsample_mode) << " expand_dim=" << cfg.effective_expand_dim()
       << '\n';
  } else {
    os << "  unet_base=" << cfg.unet_base << '\n';
  }
  for (const auto& [name, n] : param_breakdown(cfg)) os << "  " << std::left << std::setw(12) << name << n << '\n';
  os << "trainable parameters: " << param_count(cfg) << '\n';
  return os.str();
}

std::string parameter_report() {
  const ModelConfig ref = reference_config();
  const std::size_t count = param_count(ref);
  const long delta = static_cast<long>(count) - static_cast<long>(kPublishedParameterCount);
  std::ostringstream os;
  os << model_summary(ref);
  os << "published total: " << kPublishedParameterCount << "  delta: " << (delta >= 0 ? "+" : "") << delta << " ("
     << std::fixed << std::setprecision(2) << 100.0 * static_cast<double>(delta) / kPublishedParameterCount
     << "%)\n";
  os << "assumptions (unreported upstream) and their effect on the count:\n";
  auto variant = [&](const std::string& what, ModelConfig c) {
    const long d = static_cast<long>(param_count(c)) - static_cast<long>(count);
    os << "  " << std::left << std::setw(48) << what << (d >= 0 ? "+" : "") << d << '\n';
  };
  os << "  heads per stage 1,2,4 (dim/32)                  +0 (head count does not change the count "
        "without relative position bias)\n";
  {
    ModelConfig c = ref;
    c.mlp_ratio = 2;
    variant("mlp_ratio 4 -> 2", c);
    c.mlp_ratio = 3;
    variant("mlp_ratio 4 -> 3", c);
  }
  {
    ModelConfig c = ref;
    c.qkv_bias = false;
    variant("qkv bias on -> off", c);
  }
  {
    ModelConfig c = ref;
    c.relative_position_bias = true;
    variant("relative position bias off -> on", c);
  }
  {
    ModelConfig c = ref;
    c.embed_patch = {2, 2, 2};
    variant("embed_patch 4x4x4 -> 2x2x2 (breaks x16 rule)", c);
  }
  {
    ModelConfig c = ref;
    c.upsample_mode = UpsampleMode::Trilinear;
    variant("transposed-conv -> trilinear+pointwise up", c);
  }
  {
    ModelConfig c = ref;
    c.expand_dim = ref.base_dim / 2;
    variant("expand_dim 32 -> 16", c);
  }
  return os.str();
}

template <typename T>
Tensor<T> to_tensor(const ChannelVolume& v) {
  return Tensor<T>::from_data({v.channels, v.depth, v.height, v.width}, std::vector<T>(v.data.begin(), v.data.end()));
}

template <typename T>
ChannelVolume from_tensor(const Tensor<T>& t) {
  if (t.rank() != 4) throw ShapeError("from_tensor expects [C,D,H,W], got " + shape_str(t.shape()));
  ChannelVolume v(t.dim(0), t.dim(1), t.dim(2), t.dim(3));
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(t.values()[i]);
  return v;
}

template class SegmentationModel<float>;
template class SegmentationModel<double>;
template class SwinUNet3D<float>;
template class SwinUNet3D<double>;
template std::unique_ptr<SegmentationModel<float>> build_model<float>(const ModelConfig&);
template std::unique_ptr<SegmentationModel<double>> build_model<double>(const ModelConfig&);
template Tensor<float> to_tensor<float>(const ChannelVolume&);
template Tensor<double> to_tensor<double>(const ChannelVolume&);
template ChannelVolume from_tensor<float>(const Tensor<float>&);
template ChannelVolume from_tensor<double>(const Tensor<double>&);

}  // namespace swinseg3d
