#include "swinseg3d/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "swinseg3d/text.hpp"

namespace swinseg3d {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ChannelVolume as_channels(const Volume& v) {
  ChannelVolume c(1, v.depth, v.height, v.width);
  c.data = v.data;
  return c;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0,1)");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0,1)");
  if (patch_depth < 1) throw ConfigError("patch_depth must be >= 1");
  if (train_stride < 1 || train_stride > patch_depth) throw ConfigError("train_stride must lie in [1, patch_depth]");
  if (infer_stride < 1 || infer_stride > patch_depth) throw ConfigError("infer_stride must lie in [1, patch_depth]");
  loss.validate();
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_entries() const {
  return {{"lr", format_double(lr)},
          {"batch_size", std::to_string(batch_size)},
          {"max_epochs", std::to_string(max_epochs)},
          {"patience", std::to_string(patience)},
          {"focal_alpha", format_double(loss.alpha)},
          {"focal_gamma", format_double(loss.gamma)},
          {"seed", std::to_string(seed)},
          {"val_fraction", format_double(val_fraction)},
          {"max_steps", std::to_string(max_steps)},
          {"threshold", format_double(threshold)},
          {"patch_depth", std::to_string(patch_depth)},
          {"train_stride", std::to_string(train_stride)},
          {"infer_stride", std::to_string(infer_stride)}};
}

bool TrainConfig::apply(const std::string& key, const std::string& value) {
  if (key == "lr") lr = parse_double(value, key);
  else if (key == "batch_size") batch_size = parse_size(value, key);
  else if (key == "max_epochs") max_epochs = parse_size(value, key);
  else if (key == "patience") patience = parse_size(value, key);
  else if (key == "focal_alpha") loss.alpha = parse_double(value, key);
  else if (key == "focal_gamma") loss.gamma = parse_double(value, key);
  else if (key == "seed") seed = parse_u64(value, key);
  else if (key == "val_fraction") val_fraction = parse_double(value, key);
  else if (key == "max_steps") max_steps = parse_size(value, key);
  else if (key == "threshold") threshold = parse_double(value, key);
  else if (key == "patch_depth") patch_depth = parse_size(value, key);
  else if (key == "train_stride") train_stride = parse_size(value, key);
  else if (key == "infer_stride") infer_stride = parse_size(value, key);
  else return false;
  return true;
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& e : epochs) {
    os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_dice) << ','
       << format_double(e.val_iou) << ',' << format_double(e.seconds) << '\n';
  }
  return os.str();
}

std::vector<EpochRecord> TrainLog::parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kCsvHeader) throw ConfigError("train log: missing CSV header");
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(trim(cell));
    if (f.size() != 5) throw ConfigError("train log: expected 5 fields in '" + line + "'");
    out.push_back({parse_size(f[0], "epoch"), parse_double(f[1], "train_loss"), parse_double(f[2], "val_dice"),
                   parse_double(f[3], "val_iou"), parse_double(f[4], "seconds")});
  }
  return out;
}

CaseData prepare_case(const std::string& id, const Volume& pet, const Volume& ct, const Volume& mask,
                      std::size_t multiple) {
  if (mask.depth != pet.depth || mask.height != pet.height || mask.width != pet.width) {
    throw ContractError("case " + id + ": mask " + mask.shape_str() + " does not match PET " + pet.shape_str());
  }
  CaseData c;
  c.id = id;
  c.depth = pet.depth;
  c.input = preprocess_case(pet, ct, multiple);
  c.mask = as_channels(pad_depth(mask, multiple));
  return c;
}

std::vector<Sample> make_samples(const std::vector<CaseData>& cases, std::size_t depth, std::size_t stride) {
  std::vector<Sample> out;
  for (const auto& c : cases) {
    auto inputs = extract_patches(c.input, depth, stride);
    auto masks = extract_patches(c.mask, depth, stride);
    for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back({c.id, std::move(inputs[i]), std::move(masks[i].block)});
  }
  return out;
}

DataSplit split_cases(std::vector<CaseData> cases, double fraction, std::uint64_t seed) {
  const std::size_t n = cases.size();
  std::size_t held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n >= 2) held = std::clamp<std::size_t>(held, 1, n - 1);
  else held = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_val(n, false);
  for (std::size_t i = 0; i < held; ++i) is_val[order[i]] = true;
  DataSplit s;
  for (std::size_t i = 0; i < n; ++i) (is_val[i] ? s.validation : s.train).push_back(std::move(cases[i]));
  return s;
}

template <typename T>
ChannelVolume predict_logits(const SegmentationModel<T>& model, const ChannelVolume& input, std::size_t patch_depth,
                             std::size_t stride) {
  NoGradGuard no_grad;
  std::vector<PatchPrediction> preds;
  for (const auto& p : extract_patches(input, patch_depth, stride)) {
    preds.push_back({p.origin[0], from_tensor(model.forward(to_tensor<T>(p.block)))});
  }
  return stitch_patches(preds, input.depth);
}

template <typename T>
ChannelVolume predict_mask(const SegmentationModel<T>& model, const CaseData& c, const TrainConfig& cfg,
                           std::size_t stride) {
  ChannelVolume logits = crop_depth(predict_logits(model, c.input, cfg.patch_depth, stride), c.depth);
  logits.data = binarize(logits.data, cfg.threshold);
  return logits;
}

CaseMetrics MetricsReport::mean() const {
  CaseMetrics m;
  m.case_id = "mean";
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.dice += r.dice;
    m.iou += r.iou;
    m.focal += r.focal;
    m.seconds += r.seconds;
  }
  const double n = static_cast<double>(rows.size());
  m.dice /= n;
  m.iou /= n;
  m.focal /= n;
  m.seconds /= n;
  return m;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "model,case,dice,iou,focal_loss,seconds\n";
  auto row = [&](const CaseMetrics& r) {
    os << model << ',' << r.case_id << ',' << format_double(r.dice) << ',' << format_double(r.iou) << ','
       << format_double(r.focal) << ',' << format_double(r.seconds) << '\n';
  };
  for (const auto& r : rows) row(r);
  row(mean());
  return os.str();
}

template <typename T>
MetricsReport evaluate(const SegmentationModel<T>& model, const std::vector<CaseData>& cases, const TrainConfig& cfg,
                       std::size_t stride) {
  if (cases.empty()) throw ContractError("evaluate: empty dataset");
  MetricsReport report;
  report.model = architecture_name(model.config().arch);
  for (const auto& c : cases) {
    const auto t0 = Clock::now();
    const ChannelVolume logits = crop_depth(predict_logits(model, c.input, cfg.patch_depth, stride), c.depth);
    const double secs = seconds_since(t0);
    const ChannelVolume truth = crop_depth(c.mask, c.depth);
    const auto pred = binarize(logits.data, cfg.threshold);
    const OverlapCounts o = overlap(pred, truth.data);
    report.rows.push_back({c.id, dice(o), iou(o), focal_loss_value(logits.data, truth.data, cfg.loss), secs});
  }
  return report;
}

template <typename T>
const TrainLog& train(SegmentationModel<T>& model, const DataSplit& data, const TrainConfig& cfg,
                      TrainState<T>& state, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.train.empty()) throw ContractError("train: empty training set");
  const auto samples = make_samples(data.train, cfg.patch_depth, cfg.train_stride);
  std::vector<Tensor<T>> inputs, targets;
  for (const auto& s : samples) {
    model.check_input({s.patch.block.channels, s.patch.block.depth, s.patch.block.height, s.patch.block.width});
    inputs.push_back(to_tensor<T>(s.patch.block));
    targets.push_back(to_tensor<T>(s.mask));
  }
  const auto& val_cases = data.validation.empty() ? data.train : data.validation;
  const std::size_t n = samples.size();
  const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

  auto params = model.parameter_tensors();
  state.adam.lr = static_cast<T>(cfg.lr);
  TrainLog& log = state.log;
  log.stop_reason.clear();
  if (log.epochs.size() != state.adam.step / per_epoch) {
    throw ContractError("train: resume state has " + std::to_string(log.epochs.size()) + " epochs logged at step " +
                        std::to_string(state.adam.step) + " with " + std::to_string(per_epoch) + " steps per epoch");
  }

  auto restore_best = [&] {
    if (state.best_weights.size() != params.size()) return;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto dst = params[i].mutable_data();
      std::copy(state.best_weights[i].begin(), state.best_weights[i].end(), dst.begin());
    }
  };

  auto epoch_start = Clock::now();
  double carried_seconds = 0.0;
  while (true) {
    const std::size_t epoch = state.adam.step / per_epoch;  // 0-based
    if (epoch >= cfg.max_epochs) {
      log.stop_reason = "max_epochs";
      restore_best();
      return log;
    }
    if (cfg.max_steps && state.adam.step >= cfg.max_steps) {
      log.stop_reason = "step_limit";
      return log;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed + epoch);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t batch = state.adam.step % per_epoch;
    const std::size_t lo = batch * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
    model.zero_grad();
    const T inv = T(1) / static_cast<T>(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t i = order[k];
      const auto loss = focal_loss(model.forward(inputs[i]), targets[i], cfg.loss);
      const double v = static_cast<double>(loss.item());
      if (!std::isfinite(v)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batch + 1) + ", step " + std::to_string(state.adam.step + 1) +
                            " (case " + samples[i].case_id + ", slice " + std::to_string(samples[i].patch.origin[0]) +
                            ")");
      }
      ops::scale(loss, inv).backward();
      state.epoch_loss_sum += v;
      ++state.epoch_samples;
    }
    adam_step(params, state.adam);

    if (batch + 1 == per_epoch) {
      const MetricsReport val = evaluate(model, val_cases, cfg, cfg.train_stride);
      const CaseMetrics m = val.mean();
      EpochRecord rec{epoch + 1, state.epoch_loss_sum / static_cast<double>(state.epoch_samples), m.dice, m.iou,
                      carried_seconds + seconds_since(epoch_start)};
      log.epochs.push_back(rec);
      state.epoch_loss_sum = 0;
      state.epoch_samples = 0;
      carried_seconds = 0;
      epoch_start = Clock::now();
      // Dice ties go to the lower validation loss.
      const bool better = rec.val_dice > log.best_val_dice ||
                          (rec.val_dice == log.best_val_dice && m.focal < log.best_val_loss);
      if (better) {
        log.best_val_dice = rec.val_dice;
        log.best_val_loss = m.focal;
        log.best_epoch = rec.epoch;
        state.stale_epochs = 0;
        state.best_weights.clear();
        for (const auto& p : params) state.best_weights.push_back(p.values());
      } else {
        ++state.stale_epochs;
      }
      if (on_epoch) on_epoch(rec);
      if (state.stale_epochs >= cfg.patience) {
        log.stop_reason = "early_stop";
        restore_best();
        return log;
      }
    }
  }
}

template ChannelVolume predict_logits(const SegmentationModel<float>&, const ChannelVolume&, std::size_t, std::size_t);
template ChannelVolume predict_logits(const SegmentationModel<double>&, const ChannelVolume&, std::size_t,
                                      std::size_t);
template ChannelVolume predict_mask(const SegmentationModel<float>&, const CaseData&, const TrainConfig&, std::size_t);
template ChannelVolume predict_mask(const SegmentationModel<double>&, const CaseData&, const TrainConfig&,
                                    std::size_t);
template MetricsReport evaluate(const SegmentationModel<float>&, const std::vector<CaseData>&, const TrainConfig&,
                                std::size_t);
template MetricsReport evaluate(const SegmentationModel<double>&, const std::vector<CaseData>&, const TrainConfig&,
                                std::size_t);
template const TrainLog& train(SegmentationModel<float>&, const DataSplit&, const TrainConfig&, TrainState<float>&,
                               const EpochCallback&);
template const TrainLog& train(SegmentationModel<double>&, const DataSplit&, const TrainConfig&, TrainState<double>&,
                               const EpochCallback&);

}  // namespace swinseg3d
