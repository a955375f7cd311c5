#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "swinseg3d/model.hpp"
#include "swinseg3d/trainer.hpp"

namespace swinseg3d {

// Layout: an ASCII manifest (model config, optimizer and trainer progress,
// epoch log, tensor index) closed by an `end` line, then the raw tensor blob
// in little-endian IEEE-754, float32 or float64 as recorded in the manifest.

inline constexpr int kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  ModelConfig config;
  std::unique_ptr<SegmentationModel<T>> model;
  TrainState<T> state;
};

template <typename T>
std::string serialize_checkpoint(const SegmentationModel<T>& model, const TrainState<T>& state);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const SegmentationModel<T>& model,
                     const TrainState<T>& state);

/// Rebuilds model and state. When `expected` is given, a different model
/// config raises CheckpointError(ConfigMismatch).
template <typename T>
Checkpoint<T> parse_checkpoint(const std::string& bytes, const ModelConfig* expected = nullptr);

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace swinseg3d
