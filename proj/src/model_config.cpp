#include <algorithm>
#include <sstream>

#include "swinseg3d/errors.hpp"
#include "swinseg3d/model_config.hpp"
#include "swinseg3d/text.hpp"

namespace swinseg3d {

std::string architecture_name(Architecture a) { return a == Architecture::SwinUNet3D ? "swin" : "unet3d"; }

Architecture parse_architecture(const std::string& s) {
  if (s == "swin") return Architecture::SwinUNet3D;
  if (s == "unet3d") return Architecture::UNet3D;
  throw ConfigError("unknown model '" + s + "' (expected swin or unet3d)");
}

std::string upsample_mode_name(UpsampleMode m) {
  return m == UpsampleMode::Trilinear ? "trilinear" : "transposed_conv";
}

UpsampleMode parse_upsample_mode(const std::string& s) {
  if (s == "trilinear") return UpsampleMode::Trilinear;
  if (s == "transposed_conv") return UpsampleMode::TransposedConv;
  throw ConfigError("unknown upsample_mode '" + s + "'");
}

std::size_t ModelConfig::heads(std::size_t stage) const {
  if (!heads_per_stage.empty()) return heads_per_stage.at(stage);
  return std::max<std::size_t>(1, stage_dim(stage) / 32);
}

std::array<std::size_t, 3> ModelConfig::input_multiple() const {
  std::array<std::size_t, 3> m{};
  for (int a = 0; a < 3; ++a) m[a] = embed_patch[a] << kDownsamples;
  return m;
}

void ModelConfig::validate() const {
  if (in_channels == 0 || out_classes == 0) throw ConfigError("in_channels and out_classes must be positive");
  if (base_dim == 0 || window_size == 0 || blocks_per_stage == 0 || mlp_ratio == 0) {
    throw ConfigError("base_dim, window_size, blocks_per_stage and mlp_ratio must be positive");
  }
  for (std::size_t p : embed_patch) {
    if (p == 0) throw ConfigError("embed_patch entries must be positive");
  }
  if (!heads_per_stage.empty() && heads_per_stage.size() != 3) {
    throw ConfigError("heads_per_stage needs 3 entries (encoder 1, encoder 2, bottleneck)");
  }
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t h = heads(s);
    if (h == 0 || stage_dim(s) % h != 0) {
      throw ConfigError("stage " + std::to_string(s) + " dim " + std::to_string(stage_dim(s)) +
                        " not divisible by " + std::to_string(h) + " heads");
    }
  }
  if (!(head_prior >= 0.0 && head_prior < 1.0)) throw ConfigError("head_prior must be in [0, 1)");
  if (unet_base == 0) throw ConfigError("unet_base must be positive");
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_entries() const {
  std::vector<std::pair<std::string, std::string>> e;
  e.emplace_back("model", architecture_name(arch));
  e.emplace_back("in_channels", std::to_string(in_channels));
  e.emplace_back("out_classes", std::to_string(out_classes));
  e.emplace_back("base_dim", std::to_string(base_dim));
  e.emplace_back("window_size", std::to_string(window_size));
  e.emplace_back("embed_patch", join_list(std::vector<std::size_t>(embed_patch.begin(), embed_patch.end())));
  e.emplace_back("blocks_per_stage", std::to_string(blocks_per_stage));
  e.emplace_back("heads_per_stage", heads_per_stage.empty() ? "auto" : join_list(heads_per_stage));
  e.emplace_back("mlp_ratio", std::to_string(mlp_ratio));
  e.emplace_back("upsample_mode", upsample_mode_name(upsample_mode));
  e.emplace_back("relative_position_bias", relative_position_bias ? "true" : "false");
  e.emplace_back("qkv_bias", qkv_bias ? "true" : "false");
  e.emplace_back("expand_dim", std::to_string(expand_dim));
  e.emplace_back("head_prior", format_double(head_prior));
  e.emplace_back("unet_base", std::to_string(unet_base));
  e.emplace_back("model_seed", std::to_string(seed));
  return e;
}

bool ModelConfig::apply(const std::string& key, const std::string& value) {
  if (key == "model") arch = parse_architecture(value);
  else if (key == "in_channels") in_channels = parse_size(value, key);
  else if (key == "out_classes") out_classes = parse_size(value, key);
  else if (key == "base_dim") base_dim = parse_size(value, key);
  else if (key == "window_size") window_size = parse_size(value, key);
  else if (key == "embed_patch") {
    const auto v = parse_size_list(value, key);
    if (v.size() == 1) embed_patch = {v[0], v[0], v[0]};
    else if (v.size() == 3) embed_patch = {v[0], v[1], v[2]};
    else throw ConfigError("embed_patch needs 1 or 3 entries");
  } else if (key == "blocks_per_stage") blocks_per_stage = parse_size(value, key);
  else if (key == "heads_per_stage") heads_per_stage = value == "auto" ? std::vector<std::size_t>{} : parse_size_list(value, key);
  else if (key == "mlp_ratio") mlp_ratio = parse_size(value, key);
  else if (key == "upsample_mode") upsample_mode = parse_upsample_mode(value);
  else if (key == "relative_position_bias") relative_position_bias = parse_bool(value, key);
  else if (key == "qkv_bias") qkv_bias = parse_bool(value, key);
  else if (key == "expand_dim") expand_dim = parse_size(value, key);
  else if (key == "head_prior") head_prior = parse_double(value, key);
  else if (key == "unet_base") unet_base = parse_size(value, key);
  else if (key == "model_seed") seed = parse_u64(value, key);
  else return false;
  return true;
}

ModelConfig reference_config() { return ModelConfig{}; }

ModelConfig miniature_config() {
  ModelConfig c;
  c.base_dim = 8;
  c.expand_dim = 256;
  c.head_prior = 0.05;
  c.unet_base = 8;
  return c;
}

}  // namespace swinseg3d
