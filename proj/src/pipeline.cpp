#include <algorithm>
#include <sstream>

#include "swinseg3d/errors.hpp"
#include "swinseg3d/volume.hpp"

namespace swinseg3d {

Volume normalize_volume(const Volume& v) {
  if (v.data.empty()) return v;
  const float mx = *std::max_element(v.data.begin(), v.data.end());
  if (!(mx > 0.0f)) return v;
  Volume out = v;
  for (float& x : out.data) x /= mx;
  return out;
}

Volume pad_depth(const Volume& v, std::size_t multiple) {
  if (multiple == 0) throw ContractError("pad_depth: multiple must be >= 1");
  const std::size_t target = (v.depth + multiple - 1) / multiple * multiple;
  if (target == v.depth) return v;
  Volume out = v;
  out.depth = target;
  out.data.resize(out.voxels(), 0.0f);
  return out;
}

ChannelVolume stack_channels(const Volume& pet, const Volume& ct) {
  if (pet.depth != ct.depth || pet.height != ct.height || pet.width != ct.width) {
    throw ContractError("stack_channels: PET " + pet.shape_str() + " and CT " + ct.shape_str() +
                        " are not co-registered");
  }
  ChannelVolume out(2, pet.depth, pet.height, pet.width);
  std::copy(pet.data.begin(), pet.data.end(), out.data.begin());
  std::copy(ct.data.begin(), ct.data.end(), out.data.begin() + static_cast<long>(out.channel_size()));
  return out;
}

std::vector<VolumePatch> extract_patches(const ChannelVolume& stacked, std::size_t depth, std::size_t stride) {
  if (depth == 0 || stride == 0) throw ContractError("extract_patches: depth and stride must be >= 1");
  if (stride > depth) {
    throw ContractError("extract_patches: stride " + std::to_string(stride) + " exceeds patch depth " +
                        std::to_string(depth) + " and would skip slices");
  }
  if (stacked.depth < depth) {
    throw ContractError("extract_patches: volume depth " + std::to_string(stacked.depth) +
                        " is smaller than patch depth " + std::to_string(depth));
  }
  std::vector<std::size_t> starts;
  for (std::size_t z = 0; z + depth <= stacked.depth; z += stride) starts.push_back(z);
  if (starts.back() + depth < stacked.depth) starts.push_back(stacked.depth - depth);

  std::vector<VolumePatch> patches;
  const std::size_t slab = depth * stacked.slice_size();
  for (std::size_t z : starts) {
    VolumePatch p;
    p.origin = {z, 0, 0};
    p.block = ChannelVolume(stacked.channels, depth, stacked.height, stacked.width);
    for (std::size_t c = 0; c < stacked.channels; ++c) {
      const auto src = stacked.data.begin() + static_cast<long>(c * stacked.channel_size() + z * stacked.slice_size());
      std::copy(src, src + static_cast<long>(slab), p.block.data.begin() + static_cast<long>(c * slab));
    }
    patches.push_back(std::move(p));
  }
  return patches;
}

ChannelVolume stitch_patches(const std::vector<PatchPrediction>& patches, std::size_t total_depth) {
  if (patches.empty()) throw ContractError("stitch_patches: no patches");
  const auto& first = patches.front().block;
  ChannelVolume out(first.channels, total_depth, first.height, first.width);
  std::vector<unsigned> hits(total_depth, 0);
  for (const auto& p : patches) {
    const auto& b = p.block;
    if (b.channels != first.channels || b.height != first.height || b.width != first.width) {
      throw ContractError("stitch_patches: block " + b.shape_str() + " does not match " + first.shape_str());
    }
    if (p.z + b.depth > total_depth) throw ContractError("stitch_patches: block extends past target depth");
    for (std::size_t c = 0; c < b.channels; ++c)
      for (std::size_t z = 0; z < b.depth; ++z) {
        const float* src = b.data.data() + (c * b.depth + z) * b.slice_size();
        float* dst = out.data.data() + (c * total_depth + p.z + z) * out.slice_size();
        for (std::size_t i = 0; i < b.slice_size(); ++i) dst[i] += src[i];
      }
    for (std::size_t z = 0; z < b.depth; ++z) ++hits[p.z + z];
  }
  std::ostringstream gaps;
  for (std::size_t z = 0; z < total_depth;) {
    if (hits[z]) {
      ++z;
      continue;
    }
    std::size_t end = z;
    while (end < total_depth && !hits[end]) ++end;
    gaps << (gaps.tellp() > 0 ? ", " : "") << '[' << z << ',' << end << ')';
    z = end;
  }
  if (gaps.tellp() > 0) throw ContractError("stitch_patches: slices not covered: " + gaps.str());
  for (std::size_t c = 0; c < out.channels; ++c)
    for (std::size_t z = 0; z < total_depth; ++z) {
      if (hits[z] == 1) continue;
      float* dst = out.data.data() + (c * total_depth + z) * out.slice_size();
      for (std::size_t i = 0; i < out.slice_size(); ++i) dst[i] /= static_cast<float>(hits[z]);
    }
  return out;
}

ChannelVolume crop_depth(const ChannelVolume& v, std::size_t depth) {
  if (depth > v.depth || depth == 0) throw ContractError("crop_depth: invalid depth " + std::to_string(depth));
  ChannelVolume out(v.channels, depth, v.height, v.width);
  for (std::size_t c = 0; c < v.channels; ++c) {
    const auto src = v.data.begin() + static_cast<long>(c * v.channel_size());
    std::copy(src, src + static_cast<long>(out.channel_size()), out.data.begin() + static_cast<long>(c * out.channel_size()));
  }
  return out;
}

ChannelVolume preprocess_case(const Volume& pet, const Volume& ct, std::size_t multiple) {
  return stack_channels(pad_depth(normalize_volume(pet), multiple), pad_depth(normalize_volume(ct), multiple));
}

}  // namespace swinseg3d
