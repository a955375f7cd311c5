#pragma once

#include <memory>
#include <string>
#include <vector>

#include "swinseg3d/layers.hpp"
#include "swinseg3d/model_config.hpp"
#include "swinseg3d/volume.hpp"

namespace swinseg3d {

/// Common surface of the two segmentation networks: x[2,D,H,W] -> logits
/// [1,D,H,W]. A built model is read-only during forward and may be shared by
/// concurrent inference threads running under NoGradGuard.
template <typename T>
class SegmentationModel {
 public:
  explicit SegmentationModel(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~SegmentationModel() = default;
  SegmentationModel(const SegmentationModel&) = delete;
  SegmentationModel& operator=(const SegmentationModel&) = delete;

  virtual Tensor<T> forward(const Tensor<T>& x) const = 0;

  /// Throws ShapeError unless x is [in_channels, D, H, W] with every spatial
  /// axis divisible by the overall scaling factor.
  void check_input(const Shape& shape) const;

  const ModelConfig& config() const { return cfg_; }
  std::vector<NamedParameter<T>>& parameters() { return params_; }
  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  std::vector<Tensor<T>> parameter_tensors() const;
  std::size_t parameter_count() const;
  void zero_grad();

 protected:
  ModelConfig cfg_;
  std::vector<NamedParameter<T>> params_;
};

template <typename T>
class SwinUNet3D final : public SegmentationModel<T> {
 public:
  explicit SwinUNet3D(const ModelConfig& cfg);
  Tensor<T> forward(const Tensor<T>& x) const override;

  // Stage pieces, exposed for stage-level tests.
  Tensor<T> patch_embed(const Tensor<T>& x) const { return embed_(x); }
  Tensor<T> downsample(std::size_t stage, const Tensor<T>& x) const { return down_.at(stage)(x); }
  /// stage 0: bottleneck -> encoder-2 width, stage 1: encoder-2 -> encoder-1 width.
  Tensor<T> upsample(std::size_t stage, const Tensor<T>& x) const;
  const SwinBlock<T>& block(std::size_t stage, std::size_t index) const { return stages_.at(stage).at(index); }
  const SkipFuse<T>& fuse(std::size_t stage) const { return fuse_.at(stage); }

 private:
  Tensor<T> run_stage(std::size_t stage, Tensor<T> x) const;

  Conv3dLayer<T> embed_;
  std::vector<std::vector<SwinBlock<T>>> stages_;  // enc1, enc2, bottleneck, dec2, dec1
  std::vector<Conv3dLayer<T>> down_;
  std::vector<TransposedConv3dLayer<T>> up_transposed_;
  std::vector<Conv3dLayer<T>> up_pointwise_;
  std::vector<SkipFuse<T>> fuse_;
  TransposedConv3dLayer<T> expand_;
  Conv3dLayer<T> head_;
};

/// Three-level 3D U-Net: double 3x3x3 conv (channel layer-norm, ReLU),
/// max-pool encoder, transposed-conv decoder, concatenation skips.
template <typename T>
class UNet3D final : public SegmentationModel<T> {
 public:
  explicit UNet3D(const ModelConfig& cfg);
  Tensor<T> forward(const Tensor<T>& x) const override;

 private:
  struct DoubleConv {
    Conv3dLayer<T> conv1, conv2;
    LayerNormLayer<T> norm1, norm2;
    Tensor<T> operator()(const Tensor<T>& x) const;
  };
  DoubleConv double_conv(ParameterFactory<T>& f, const std::string& name, std::size_t in, std::size_t out);

  DoubleConv enc1_, enc2_, bottom_, dec2_, dec1_;
  TransposedConv3dLayer<T> up2_, up1_;
  Conv3dLayer<T> head_;
};

template <typename T>
std::unique_ptr<SegmentationModel<T>> build_model(const ModelConfig& cfg);

/// Exact trainable scalar count of the network `cfg` describes.
std::size_t param_count(const ModelConfig& cfg);

/// Per-top-level-module parameter totals, in construction order.
std::vector<std::pair<std::string, std::size_t>> param_breakdown(const ModelConfig& cfg);

/// Human-readable model summary including parameter accounting.
std::string model_summary(const ModelConfig& cfg);

/// The trainable-parameter total reported for the reference network.
inline constexpr std::size_t kPublishedParameterCount = 810'721;

/// Reference-config count, the published total, and how each unreported
/// architectural assumption moves the count.
std::string parameter_report();

template <typename T>
Tensor<T> to_tensor(const ChannelVolume& v);
template <typename T>
ChannelVolume from_tensor(const Tensor<T>& t);

}  // namespace swinseg3d
