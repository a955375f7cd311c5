#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "swinseg3d/model_config.hpp"
#include "swinseg3d/trainer.hpp"
#include "swinseg3d/volume.hpp"

namespace swinseg3d {

/// Everything a command needs, read from `key = value` lines. Defaults are
/// the desk-scale miniature network with the published training settings.
struct RunConfig {
  ModelConfig model = miniature_config();
  TrainConfig train;
  SynthSpec synth;
  std::string data_dir = "data";
  std::string out_dir = "runs";
  std::size_t synth_count = 4;
  std::size_t timing_runs = 5;

  /// Sets the model, training and synthesis seeds together.
  void set_seed(std::uint64_t seed);
  void validate() const;
  bool operator==(const RunConfig& o) const;
};

/// Per-case seed for synthetic case `index` of a run seeded with `seed`.
std::uint64_t case_seed(std::uint64_t seed, std::size_t index);

/// Throws ConfigError("line N: ...") on a malformed line, unknown key or bad value.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace swinseg3d
