#include "swinseg3d/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <regex>
#include <sstream>

#include "swinseg3d/checkpoint.hpp"
#include "swinseg3d/text.hpp"

namespace swinseg3d {

namespace {

std::string case_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "case%03zu", i);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

}  // namespace

void cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::size_t count, std::ostream& out) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());
  for (std::size_t i = 0; i < count; ++i) {
    SynthSpec spec = cfg.synth;
    spec.seed = case_seed(cfg.synth.seed, i);
    const SynthCase c = synth_generate(spec);
    const std::string stem = case_name(i);
    save_volume(c.pet, out_dir / (stem + "_pet.vvol"));
    save_volume(c.ct, out_dir / (stem + "_ct.vvol"));
    save_volume(c.mask, out_dir / (stem + "_mask.vvol"));
  }
  out << "wrote " << count << " cases to " << out_dir.string() << '\n';
}

std::vector<CaseData> load_cases(const fs::path& dir, std::size_t multiple) {
  if (!fs::is_directory(dir)) throw IoError("data directory " + dir.string() + " does not exist");
  static const std::regex name_re(R"((case\d+)_(pet|ct|mask)\.vvol)");
  std::map<std::string, std::map<std::string, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, name_re)) found[m[1]][m[2]] = entry.path();
  }
  if (found.empty()) throw IoError("no caseNNN_{pet,ct,mask}.vvol files in " + dir.string());
  std::vector<CaseData> cases;
  for (const auto& [id, files] : found) {
    for (const char* mod : {"pet", "ct", "mask"}) {
      if (!files.count(mod)) throw IoError(id + ": missing " + std::string(mod) + " volume in " + dir.string());
    }
    cases.push_back(prepare_case(id, load_volume(files.at("pet")), load_volume(files.at("ct")),
                                 load_volume(files.at("mask")), multiple));
  }
  return cases;
}

fs::path train_log_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p.replace_extension(".csv");
  return p;
}

TrainLog cmd_train(RunConfig cfg, const fs::path& data_dir, Architecture arch, const fs::path& checkpoint,
                   std::ostream& out) {
  cfg.model.arch = arch;
  cfg.validate();
  DataSplit split = split_cases(load_cases(data_dir, cfg.model.input_multiple()[0]), cfg.train.val_fraction,
                                cfg.train.seed);
  auto model = build_model<float>(cfg.model);
  out << "model " << architecture_name(arch) << ": " << model->parameter_count() << " trainable parameters\n";
  out << "cases: " << split.train.size() << " train, " << split.validation.size() << " validation\n";
  TrainState<float> state;
  const TrainLog& log = train(*model, split, cfg.train, state, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " loss " << fixed(r.train_loss, 5) << " val_dice " << fixed(r.val_dice, 4)
        << " val_iou " << fixed(r.val_iou, 4) << " (" << fixed(r.seconds, 1) << "s)" << std::endl;
  });
  if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
  save_checkpoint(checkpoint, *model, state);
  write_text(train_log_path(checkpoint), log.to_csv());
  out << "stopped: " << log.stop_reason << ", best epoch " << log.best_epoch << " val_dice "
      << fixed(log.best_val_dice, 4) << '\n';
  out << "checkpoint: " << checkpoint.string() << '\n';
  return log;
}

void cmd_infer(const fs::path& checkpoint, const fs::path& pet_path, const fs::path& ct_path,
               const fs::path& out_mask, const TrainConfig& tc, std::size_t stride, std::ostream& out) {
  const auto ck = load_checkpoint<float>(checkpoint);
  const Volume pet = load_volume(pet_path), ct = load_volume(ct_path);
  if (pet.depth != ct.depth || pet.height != ct.height || pet.width != ct.width) {
    throw ShapeError("PET " + pet.shape_str() + " and CT " + ct.shape_str() + " differ in shape");
  }
  tc.validate();
  if (stride < 1 || stride > tc.patch_depth) throw ConfigError("stride must lie in [1, " + std::to_string(tc.patch_depth) + "]");
  CaseData c;
  c.id = pet_path.stem().string();
  c.depth = pet.depth;
  c.input = preprocess_case(pet, ct, ck.config.input_multiple()[0]);
  const ChannelVolume mask = predict_mask(*ck.model, c, tc, stride);
  Volume v(mask.depth, mask.height, mask.width, Modality::MASK);
  v.spacing = pet.spacing;
  v.data = mask.data;
  save_volume(v, out_mask);
  const auto positives = std::count(v.data.begin(), v.data.end(), 1.0f);
  out << "wrote " << out_mask.string() << " " << v.shape_str() << ", " << positives << " lesion voxels\n";
}

MetricsReport cmd_eval(const fs::path& checkpoint, const fs::path& data_dir, const TrainConfig& tc, std::size_t stride,
                       std::ostream& out) {
  const auto ck = load_checkpoint<float>(checkpoint);
  tc.validate();
  if (stride < 1 || stride > tc.patch_depth) throw ConfigError("stride must lie in [1, " + std::to_string(tc.patch_depth) + "]");
  const MetricsReport report = evaluate(*ck.model, load_cases(data_dir, ck.config.input_multiple()[0]), tc, stride);
  out << report.to_csv();
  return report;
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream os;
  os << kHeader << '\n';
  for (const auto& r : rows) {
    os << r.model << ',' << r.params << ',' << fixed(r.train_dice, 4) << ',' << fixed(r.dice, 4) << ','
       << fixed(r.iou, 4) << ',' << fixed(r.focal, 5) << ',' << fixed(r.seconds_per_scan, 4) << '\n';
  }
  return os.str();
}

ComparisonTable cmd_compare(const RunConfig& cfg, const fs::path& data_dir, std::ostream& out) {
  cfg.validate();
  const DataSplit split = split_cases(load_cases(data_dir, cfg.model.input_multiple()[0]), cfg.train.val_fraction,
                                      cfg.train.seed);
  const auto& held_out = split.validation.empty() ? split.train : split.validation;
  ComparisonTable table;
  for (Architecture arch : {Architecture::SwinUNet3D, Architecture::UNet3D}) {
    ModelConfig mc = cfg.model;
    mc.arch = arch;
    auto model = build_model<float>(mc);
    TrainState<float> state;
    const TrainLog& log = train(*model, split, cfg.train, state, [&](const EpochRecord& r) {
      out << architecture_name(arch) << " epoch " << r.epoch << " loss " << fixed(r.train_loss, 5) << " val_dice "
          << fixed(r.val_dice, 4) << std::endl;
    });
    out << architecture_name(arch) << ": " << log.epochs.size() << " epochs, best " << log.best_epoch << " ("
        << log.stop_reason << ")\n";

    ComparisonRow row;
    row.model = architecture_name(arch);
    row.params = model->parameter_count();
    row.train_dice = evaluate(*model, split.train, cfg.train, cfg.train.infer_stride).mean().dice;
    const CaseMetrics m = evaluate(*model, held_out, cfg.train, cfg.train.infer_stride).mean();
    row.dice = m.dice;
    row.iou = m.iou;
    row.focal = m.focal;

    predict_logits(*model, held_out.front().input, cfg.train.patch_depth, cfg.train.infer_stride);
    std::vector<double> per_scan;
    for (std::size_t r = 0; r < cfg.timing_runs; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      for (const auto& c : held_out) predict_logits(*model, c.input, cfg.train.patch_depth, cfg.train.infer_stride);
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      per_scan.push_back(s / static_cast<double>(held_out.size()));
    }
    std::nth_element(per_scan.begin(), per_scan.begin() + static_cast<long>(per_scan.size() / 2), per_scan.end());
    row.seconds_per_scan = per_scan[per_scan.size() / 2];
    table.rows.push_back(row);
  }
  out << table.to_csv();
  return table;
}

}  // namespace swinseg3d
