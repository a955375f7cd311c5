#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace swinseg3d {

enum class Architecture { SwinUNet3D, UNet3D };
enum class UpsampleMode { Trilinear, TransposedConv };

std::string architecture_name(Architecture a);
Architecture parse_architecture(const std::string& s);
std::string upsample_mode_name(UpsampleMode m);
UpsampleMode parse_upsample_mode(const std::string& s);

/// Complete architectural record. Two models built from equal configs have
/// bit-identical initial weights.
struct ModelConfig {
  Architecture arch = Architecture::SwinUNet3D;
  std::size_t in_channels = 2;
  std::size_t out_classes = 1;
  std::size_t base_dim = 32;
  std::size_t window_size = 2;
  std::array<std::size_t, 3> embed_patch{4, 4, 4};
  std::size_t blocks_per_stage = 2;
  // Encoder stage 1, encoder stage 2, bottleneck. Decoder stages mirror the
  // encoder. Empty means stage_dim / 32 (at least 1).
  std::vector<std::size_t> heads_per_stage;
  std::size_t mlp_ratio = 4;
  UpsampleMode upsample_mode = UpsampleMode::TransposedConv;
  bool relative_position_bias = false;
  bool qkv_bias = true;
  // Channels of the final patch expansion; 0 means base_dim.
  std::size_t expand_dim = 0;
  // Initial lesion probability encoded in the head bias; 0 keeps fan-in init.
  double head_prior = 0.0;
  // Baseline 3D U-Net width.
  std::size_t unet_base = 16;
  std::uint64_t seed = 0;

  static constexpr std::size_t kDownsamples = 2;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  std::size_t stage_dim(std::size_t stage) const { return base_dim << stage; }
  std::size_t heads(std::size_t stage) const;
  std::size_t effective_expand_dim() const { return expand_dim ? expand_dim : base_dim; }
  /// Spatial divisibility required of model inputs on each axis.
  std::array<std::size_t, 3> input_multiple() const;

  /// Ordered key/value form shared by run configs and checkpoint manifests.
  std::vector<std::pair<std::string, std::string>> to_entries() const;
  /// Applies one key; returns false when the key is not a model key.
  bool apply(const std::string& key, const std::string& value);

  bool operator==(const ModelConfig&) const = default;
};

/// Table I reference architecture.
ModelConfig reference_config();
/// Desk-scale configuration used by tests and the learning smoke run.
ModelConfig miniature_config();

}  // namespace swinseg3d
