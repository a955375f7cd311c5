#include <cmath>

#include "swinseg3d/model.hpp"

namespace swinseg3d {

template <typename T>
typename UNet3D<T>::DoubleConv UNet3D<T>::double_conv(ParameterFactory<T>& f, const std::string& name,
                                                     std::size_t in, std::size_t out) {
  DoubleConv d;
  d.conv1 = Conv3dLayer<T>(f, name + ".conv1", in, out, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, kRectifierGain);
  d.norm1 = LayerNormLayer<T>(f, name + ".norm1", out);
  d.conv2 = Conv3dLayer<T>(f, name + ".conv2", out, out, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, kRectifierGain);
  d.norm2 = LayerNormLayer<T>(f, name + ".norm2", out);
  return d;
}

template <typename T>
Tensor<T> UNet3D<T>::DoubleConv::operator()(const Tensor<T>& x) const {
  auto h = ops::relu(norm1.channels(conv1(x)));
  return ops::relu(norm2.channels(conv2(h)));
}

template <typename T>
UNet3D<T>::UNet3D(const ModelConfig& cfg) : SegmentationModel<T>(cfg) {
  cfg.validate();
  if (cfg.arch != Architecture::UNet3D) throw ConfigError("UNet3D built from a non-unet3d config");
  ParameterFactory<T> f(cfg.seed, this->params_);
  const std::size_t b = cfg.unet_base;
  enc1_ = double_conv(f, "enc1", cfg.in_channels, b);
  enc2_ = double_conv(f, "enc2", b, 2 * b);
  bottom_ = double_conv(f, "bottom", 2 * b, 4 * b);
  up2_ = TransposedConv3dLayer<T>(f, "up2", 4 * b, 2 * b, {2, 2, 2});
  dec2_ = double_conv(f, "dec2", 4 * b, 2 * b);
  up1_ = TransposedConv3dLayer<T>(f, "up1", 2 * b, b, {2, 2, 2});
  dec1_ = double_conv(f, "dec1", 2 * b, b);
  head_ = Conv3dLayer<T>(f, "head", b, cfg.out_classes, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, kHeadGain);
  if (cfg.head_prior > 0.0) {
    const T bias = static_cast<T>(-std::log((1.0 - cfg.head_prior) / cfg.head_prior));
    for (auto& v : head_.bias.mutable_data()) v = bias;
  }
}

template <typename T>
Tensor<T> UNet3D<T>::forward(const Tensor<T>& input) const {
  this->check_input(input.shape());
  const auto s1 = enc1_(input);
  const auto s2 = enc2_(ops::max_pool2(s1));
  auto x = bottom_(ops::max_pool2(s2));
  x = dec2_(ops::concat<T>({up2_(x), s2}, 0));
  x = dec1_(ops::concat<T>({up1_(x), s1}, 0));
  return head_(x);
}

template class UNet3D<float>;
template class UNet3D<double>;

}  // namespace swinseg3d
