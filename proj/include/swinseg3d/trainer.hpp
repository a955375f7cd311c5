#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "swinseg3d/adam.hpp"
#include "swinseg3d/losses.hpp"
#include "swinseg3d/model.hpp"
#include "swinseg3d/volume.hpp"

namespace swinseg3d {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 2;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;  // epochs without a validation gain
  FocalConfig loss;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  std::size_t max_steps = 0;  // 0: no limit
  double threshold = 0.5;
  std::size_t patch_depth = 16;
  std::size_t train_stride = 16;
  std::size_t infer_stride = 8;

  void validate() const;
  std::vector<std::pair<std::string, std::string>> to_entries() const;
  bool apply(const std::string& key, const std::string& value);
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_dice = 0;
  double val_iou = 0;
  double seconds = 0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 until the first epoch completes
  double best_val_dice = -1.0;
  double best_val_loss = std::numeric_limits<double>::infinity();  // breaks Dice ties
  std::string stop_reason;  // "", max_epochs, early_stop, step_limit

  static constexpr const char* kCsvHeader = "epoch,train_loss,val_dice,val_iou,seconds";
  std::string to_csv() const;
  static std::vector<EpochRecord> parse_csv(const std::string& text);
  bool operator==(const TrainLog&) const = default;
};

/// A preprocessed case: stacked, normalized, depth-padded input with the
/// matching padded mask, plus the depth before padding.
struct CaseData {
  std::string id;
  ChannelVolume input;  // [2, Dp, H, W]
  ChannelVolume mask;   // [1, Dp, H, W]
  std::size_t depth = 0;
};

CaseData prepare_case(const std::string& id, const Volume& pet, const Volume& ct, const Volume& mask,
                      std::size_t multiple = 16);

struct Sample {
  std::string case_id;
  VolumePatch patch;
  ChannelVolume mask;
};

std::vector<Sample> make_samples(const std::vector<CaseData>& cases, std::size_t depth, std::size_t stride);

struct DataSplit {
  std::vector<CaseData> train;
  std::vector<CaseData> validation;
};

/// Seed-stable split holding out round(fraction * N) cases, at least one when
/// N >= 2 and never all of them.
DataSplit split_cases(std::vector<CaseData> cases, double fraction, std::uint64_t seed);

/// Everything needed to continue a run exactly where it paused.
template <typename T>
struct TrainState {
  AdamState<T> adam;
  TrainLog log;
  double epoch_loss_sum = 0;  // partial epoch, per-sample losses
  std::size_t epoch_samples = 0;
  std::size_t stale_epochs = 0;
  std::vector<std::vector<T>> best_weights;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on `data.train`, validating on `data.validation` (or on the training
/// cases when no case is held out). Resumes from `state`. When the run ends by
/// epoch limit or early stopping the model holds the best-validation weights;
/// a step-limit stop leaves the latest weights so the state stays resumable.
template <typename T>
const TrainLog& train(SegmentationModel<T>& model, const DataSplit& data, const TrainConfig& cfg,
                      TrainState<T>& state, const EpochCallback& on_epoch = {});

/// Whole-case logits [1, Dp, H, W] from overlapping depth patches.
template <typename T>
ChannelVolume predict_logits(const SegmentationModel<T>& model, const ChannelVolume& input, std::size_t patch_depth,
                             std::size_t stride);

struct CaseMetrics {
  std::string case_id;
  double dice = 0;
  double iou = 0;
  double focal = 0;
  double seconds = 0;
};

struct MetricsReport {
  std::string model;
  std::vector<CaseMetrics> rows;
  CaseMetrics mean() const;
  std::string to_csv() const;
};

template <typename T>
MetricsReport evaluate(const SegmentationModel<T>& model, const std::vector<CaseData>& cases, const TrainConfig& cfg,
                       std::size_t stride);

/// Binary mask of one case cropped back to its original depth.
template <typename T>
ChannelVolume predict_mask(const SegmentationModel<T>& model, const CaseData& c, const TrainConfig& cfg,
                           std::size_t stride);

}  // namespace swinseg3d
