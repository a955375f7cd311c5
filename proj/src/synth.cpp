#include <cmath>
#include <random>

#include "swinseg3d/errors.hpp"
#include "swinseg3d/volume.hpp"

namespace swinseg3d {

namespace {

void validate(const SynthSpec& s) {
  if (s.depth == 0 || s.height == 0 || s.width == 0) throw ContractError("synth: volume dims must be positive");
  if (s.lesions_min > s.lesions_max) throw ContractError("synth: lesions_min > lesions_max");
  if (s.radius_min < 1.0 || s.radius_max < s.radius_min) {
    throw ContractError("synth: radius range must satisfy 1 <= radius_min <= radius_max");
  }
  if (s.pet_hot_min > s.pet_hot_max || s.pet_background < 0.0 || s.ct_noise < 0.0) {
    throw ContractError("synth: invalid intensity parameters");
  }
  if (s.lesions_max > 0) {
    for (std::size_t dim : {s.depth, s.height, s.width}) {
      if (2.0 * s.radius_min + 1.0 > static_cast<double>(dim)) {
        throw ContractError("synth: lesion of radius " + std::to_string(s.radius_min) +
                            " cannot fit in a volume of extent " + std::to_string(dim));
      }
    }
  }
}

}  // namespace

SynthCase synth_generate(const SynthSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  SynthCase out{Volume(spec.depth, spec.height, spec.width, Modality::PET),
                Volume(spec.depth, spec.height, spec.width, Modality::CT),
                Volume(spec.depth, spec.height, spec.width, Modality::MASK)};

  for (float& v : out.pet.data) v = static_cast<float>(uniform(0.0, spec.pet_background));

  const std::size_t count =
      std::uniform_int_distribution<std::size_t>(spec.lesions_min, spec.lesions_max)(rng);
  const std::array<std::size_t, 3> dims{spec.depth, spec.height, spec.width};
  for (std::size_t l = 0; l < count; ++l) {
    std::array<double, 3> radius{}, center{};
    for (int a = 0; a < 3; ++a) {
      const double fit = (static_cast<double>(dims[a]) - 1.0) / 2.0;
      radius[a] = uniform(spec.radius_min, std::min(spec.radius_max, fit));
      center[a] = uniform(radius[a], static_cast<double>(dims[a]) - 1.0 - radius[a]);
    }
    const double hot = uniform(spec.pet_hot_min, spec.pet_hot_max);
    for (std::size_t z = 0; z < spec.depth; ++z)
      for (std::size_t y = 0; y < spec.height; ++y)
        for (std::size_t x = 0; x < spec.width; ++x) {
          const double dz = (static_cast<double>(z) - center[0]) / radius[0];
          const double dy = (static_cast<double>(y) - center[1]) / radius[1];
          const double dx = (static_cast<double>(x) - center[2]) / radius[2];
          if (dz * dz + dy * dy + dx * dx > 1.0) continue;
          if (out.mask.at(z, y, x) == 0.0f) out.pet.at(z, y, x) += static_cast<float>(hot);
          out.mask.at(z, y, x) = 1.0f;
        }
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t z = 0; z < spec.depth; ++z)
    for (std::size_t y = 0; y < spec.height; ++y)
      for (std::size_t x = 0; x < spec.width; ++x) {
        const double ramp = (static_cast<double>(z) / static_cast<double>(spec.depth) +
                             static_cast<double>(y) / static_cast<double>(spec.height) +
                             static_cast<double>(x) / static_cast<double>(spec.width)) / 3.0;
        out.ct.at(z, y, x) =
            static_cast<float>(spec.ct_base + spec.ct_gradient * ramp + spec.ct_noise * noise(rng));
      }
  return out;
}

}  // namespace swinseg3d
