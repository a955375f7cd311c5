#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "swinseg3d/run_config.hpp"
#include "swinseg3d/trainer.hpp"

namespace swinseg3d {

namespace fs = std::filesystem;

/// Writes `count` synthetic cases as caseNNN_{pet,ct,mask}.vvol.
void cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::size_t count, std::ostream& out);

/// Reads every caseNNN triple in `dir`, sorted by case id.
std::vector<CaseData> load_cases(const fs::path& dir, std::size_t multiple = 16);

/// CSV log path written next to a checkpoint.
fs::path train_log_path(const fs::path& checkpoint);

/// Trains `arch` on the cases in `data_dir`; writes the checkpoint and its CSV log.
TrainLog cmd_train(RunConfig cfg, const fs::path& data_dir, Architecture arch, const fs::path& checkpoint,
                   std::ostream& out);

/// Whole-volume prediction of one PET/CT pair, saved as a MASK volume.
/// Patch depth and threshold come from `tc`.
void cmd_infer(const fs::path& checkpoint, const fs::path& pet, const fs::path& ct, const fs::path& out_mask,
               const TrainConfig& tc, std::size_t stride, std::ostream& out);

/// Per-case metrics of a checkpoint over every case in `data_dir`, printed as CSV.
MetricsReport cmd_eval(const fs::path& checkpoint, const fs::path& data_dir, const TrainConfig& tc, std::size_t stride,
                       std::ostream& out);

struct ComparisonRow {
  std::string model;
  std::size_t params = 0;
  double train_dice = 0;
  double dice = 0;
  double iou = 0;
  double focal = 0;
  double seconds_per_scan = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  static constexpr const char* kHeader = "model,params,train_dice,dice,iou,focal_loss,seconds_per_scan";
  std::string to_csv() const;
};

/// Trains both architectures on one seed-stable split of `data_dir` and
/// reports validation metrics with median-of-runs inference timing.
ComparisonTable cmd_compare(const RunConfig& cfg, const fs::path& data_dir, std::ostream& out);

}  // namespace swinseg3d
