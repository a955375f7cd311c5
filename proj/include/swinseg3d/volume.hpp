#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace swinseg3d {

enum class Modality { PET, CT, MASK };

std::string modality_name(Modality m);
Modality parse_modality(const std::string& name);

/// Single-modality scalar field, z-major then y then x.
struct Volume {
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  Modality modality = Modality::PET;
  std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};  // (z, y, x) mm, informational
  std::vector<float> data;

  Volume() = default;
  Volume(std::size_t d, std::size_t h, std::size_t w, Modality m, float fill = 0.0f);

  std::size_t voxels() const { return depth * height * width; }
  float& at(std::size_t z, std::size_t y, std::size_t x) { return data[(z * height + y) * width + x]; }
  float at(std::size_t z, std::size_t y, std::size_t x) const { return data[(z * height + y) * width + x]; }
  std::string shape_str() const;
};

/// Channels x depth x height x width block. Used for stacked PET/CT volumes,
/// patches and per-patch predictions.
struct ChannelVolume {
  std::size_t channels = 0;
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  ChannelVolume() = default;
  ChannelVolume(std::size_t c, std::size_t d, std::size_t h, std::size_t w, float fill = 0.0f);

  std::size_t slice_size() const { return height * width; }
  std::size_t channel_size() const { return depth * height * width; }
  float& at(std::size_t c, std::size_t z, std::size_t y, std::size_t x) {
    return data[((c * depth + z) * height + y) * width + x];
  }
  float at(std::size_t c, std::size_t z, std::size_t y, std::size_t x) const {
    return data[((c * depth + z) * height + y) * width + x];
  }
  std::string shape_str() const;
  bool operator==(const ChannelVolume&) const = default;
};

/// Model input unit: channel 0 PET, channel 1 CT, `depth` slices, with the
/// voxel offset of its first slice in the source volume.
struct VolumePatch {
  ChannelVolume block;
  std::array<std::size_t, 3> origin{0, 0, 0};  // (z, y, x)
};

// ---- VVOL file format -------------------------------------------------------
// ASCII header `VVOL1 <modality> <D> <H> <W> <sz> <sy> <sx>\n` followed by
// D*H*W little-endian IEEE-754 float32 values.

Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& volume, const std::filesystem::path& path);
Volume parse_volume(const std::string& bytes);
std::string serialize_volume(const Volume& volume);

// ---- preprocessing ----------------------------------------------------------

/// Divides every voxel by the volume maximum. A volume whose maximum is not
/// positive is returned unchanged.
Volume normalize_volume(const Volume& v);

/// Appends zero slices until depth is a multiple of `multiple`.
Volume pad_depth(const Volume& v, std::size_t multiple = 16);

/// Channel 0 = PET, channel 1 = CT. Shapes must match.
ChannelVolume stack_channels(const Volume& pet, const Volume& ct);

/// Tiles the depth axis from z = 0 with the given stride, keeping full H x W.
/// A final patch aligned to the end is added when the stride does not land on it.
std::vector<VolumePatch> extract_patches(const ChannelVolume& stacked, std::size_t depth = 16,
                                         std::size_t stride = 16);

struct PatchPrediction {
  std::size_t z = 0;  // first slice in the target volume
  ChannelVolume block;
};

/// Averages overlapping blocks into a volume of `total_depth` slices. Every
/// slice must be covered at least once.
ChannelVolume stitch_patches(const std::vector<PatchPrediction>& patches, std::size_t total_depth);

/// Keeps the first `depth` slices.
ChannelVolume crop_depth(const ChannelVolume& v, std::size_t depth);

/// Full preprocessing of one case: normalize each modality, pad depth, stack.
ChannelVolume preprocess_case(const Volume& pet, const Volume& ct, std::size_t multiple = 16);

// ---- synthetic cases --------------------------------------------------------

struct SynthSpec {
  std::size_t depth = 32;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t lesions_min = 1;
  std::size_t lesions_max = 3;
  double radius_min = 8.0;  // voxels, per axis
  double radius_max = 14.0;
  double pet_hot_min = 6.0;  // lesion uptake
  double pet_hot_max = 10.0;
  double pet_background = 1.0;  // upper bound of uniform background uptake
  double ct_base = 100.0;
  double ct_gradient = 200.0;  // amplitude of the smooth spatial ramp
  double ct_noise = 20.0;      // std dev of additive Gaussian noise
  std::uint64_t seed = 0;
};

struct SynthCase {
  Volume pet;
  Volume ct;
  Volume mask;
};

/// Ellipsoid lesions fully inside the volume, hot in PET; CT is an
/// independent smooth ramp plus noise. Deterministic in `spec.seed`.
SynthCase synth_generate(const SynthSpec& spec);

}  // namespace swinseg3d
