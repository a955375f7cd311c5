#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "swinseg3d/checkpoint.hpp"
#include "swinseg3d/errors.hpp"
#include "swinseg3d/trainer.hpp"

using namespace swinseg3d;

namespace {

CaseData small_case(std::size_t i, std::size_t depth = 16) {
  SynthSpec s;
  s.depth = depth;
  s.height = s.width = 16;
  s.radius_min = 2.0;
  s.radius_max = 4.0;
  s.seed = 100 + i;
  const auto c = synth_generate(s);
  return prepare_case("case" + std::to_string(i), c.pet, c.ct, c.mask);
}

std::vector<CaseData> small_cases(std::size_t n, std::size_t depth = 16) {
  std::vector<CaseData> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(small_case(i, depth));
  return out;
}

TrainConfig quick_config() {
  TrainConfig t;
  t.lr = 1e-3;
  t.max_epochs = 3;
  t.seed = 9;
  return t;
}

template <typename T>
std::unique_ptr<SegmentationModel<T>> mini_model(std::uint64_t seed = 1) {
  auto cfg = miniature_config();
  cfg.seed = seed;
  return build_model<T>(cfg);
}

template <typename T>
std::vector<std::vector<T>> weights_of(const SegmentationModel<T>& m) {
  std::vector<std::vector<T>> w;
  for (const auto& p : m.parameters()) w.push_back(p.value.values());
  return w;
}

std::vector<EpochRecord> without_time(std::vector<EpochRecord> r) {
  for (auto& e : r) e.seconds = 0;
  return r;
}

// Thresholds the normalized PET channel, which separates synthetic lesions exactly.
class PetThresholdModel final : public SegmentationModel<float> {
 public:
  PetThresholdModel() : SegmentationModel<float>(miniature_config()) {}
  Tensor<float> forward(const Tensor<float>& x) const override {
    const std::size_t n = x.numel() / 2;
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = 40.0f * (x.at(i) - 0.35f);
    return Tensor<float>::from_data({1, x.dim(1), x.dim(2), x.dim(3)}, std::move(out), false);
  }
};

}  // namespace

TEST(Split, SeedStableAndDisjoint) {
  const auto cases = small_cases(10);
  const auto a = split_cases(cases, 0.2, 5), b = split_cases(cases, 0.2, 5);
  ASSERT_EQ(a.validation.size(), 2u);
  EXPECT_EQ(a.train.size(), 8u);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a.validation[i].id, b.validation[i].id);
  for (const auto& c : a.train) ids.insert(c.id);
  for (const auto& c : a.validation) EXPECT_TRUE(ids.insert(c.id).second);
  EXPECT_EQ(ids.size(), 10u);
  bool differs = false;
  for (std::uint64_t s = 6; s < 20 && !differs; ++s) differs = split_cases(cases, 0.2, s).validation[0].id != a.validation[0].id;
  EXPECT_TRUE(differs);
  EXPECT_EQ(split_cases(small_cases(4), 0.2, 1).validation.size(), 1u);
  EXPECT_EQ(split_cases(small_cases(2), 0.9, 1).train.size(), 1u);
  EXPECT_EQ(split_cases(small_cases(1), 0.2, 1).validation.size(), 0u);
}

TEST(Samples, PatchesPerCaseFollowStride) {
  const auto cases = small_cases(2, 32);
  EXPECT_EQ(make_samples(cases, 16, 16).size(), 4u);
  EXPECT_EQ(make_samples(cases, 16, 8).size(), 6u);
  const auto s = make_samples(cases, 16, 16);
  EXPECT_EQ(s[1].case_id, "case0");
  EXPECT_EQ(s[1].patch.origin[0], 16u);
  EXPECT_EQ(s[1].mask.channels, 1u);
}

TEST(Prepare, PadsDepthAndRecordsOriginal) {
  SynthSpec s;
  s.depth = 20;
  s.height = s.width = 16;
  s.radius_min = s.radius_max = 3;
  const auto c = synth_generate(s);
  const auto d = prepare_case("x", c.pet, c.ct, c.mask);
  EXPECT_EQ(d.depth, 20u);
  EXPECT_EQ(d.input.depth, 32u);
  EXPECT_EQ(d.mask.depth, 32u);
  Volume bad(19, 16, 16, Modality::MASK);
  EXPECT_THROW(prepare_case("x", c.pet, c.ct, bad), ContractError);
}

TEST(Train, OneEpochTakesCeilNOverBSteps) {
  for (auto [n_cases, batch, want] : {std::tuple{1u, 2u, 1u}, std::tuple{5u, 2u, 3u}, std::tuple{4u, 1u, 4u},
                                      std::tuple{3u, 3u, 1u}}) {
    auto model = mini_model<float>();
    DataSplit split{small_cases(n_cases), {}};
    TrainConfig cfg = quick_config();
    cfg.max_epochs = 1;
    cfg.batch_size = batch;
    TrainState<float> state;
    const auto& log = train(*model, split, cfg, state);
    EXPECT_EQ(state.adam.step, want) << n_cases << " samples, batch " << batch;
    EXPECT_EQ(log.epochs.size(), 1u);
    EXPECT_EQ(log.stop_reason, "max_epochs");
  }
}

TEST(Train, ZeroLearningRateLeavesWeightsUnchanged) {
  auto model = mini_model<float>();
  const auto before = weights_of(*model);
  TrainConfig cfg = quick_config();
  cfg.lr = 0.0;
  TrainState<float> state;
  train(*model, DataSplit{small_cases(3), {}}, cfg, state);
  EXPECT_EQ(state.adam.step, 6u);
  EXPECT_EQ(weights_of(*model), before);
}

TEST(Train, FixedSeedGivesIdenticalLogs) {
  auto run = [] {
    auto model = mini_model<double>(3);
    TrainState<double> state;
    train(*model, split_cases(small_cases(3), 0.3, 2), quick_config(), state);
    return std::pair{without_time(state.log.epochs), weights_of(*model)};
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  for (const auto& e : a.first) EXPECT_TRUE(std::isfinite(e.train_loss));
}

TEST(Train, ResumedRunMatchesContinuousRunStepForStep) {
  const auto split = split_cases(small_cases(4), 0.25, 1);
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 100;
  cfg.max_steps = 5;  // three training samples, batch 2: the split lands inside epoch 2

  auto continuous = mini_model<double>(4);
  TrainState<double> cs;
  train(*continuous, split, cfg, cs);
  ASSERT_EQ(cs.adam.step, 5u);
  ASSERT_EQ(cs.log.stop_reason, "step_limit");

  auto first = mini_model<double>(4);
  TrainState<double> fs;
  cfg.max_steps = 3;
  train(*first, split, cfg, fs);
  ASSERT_EQ(fs.adam.step, 3u);
  const std::string bytes = serialize_checkpoint(*first, fs);
  auto ck = parse_checkpoint<double>(bytes);
  cfg.max_steps = 5;
  train(*ck.model, split, cfg, ck.state);

  EXPECT_EQ(weights_of(*ck.model), weights_of(*continuous));
  EXPECT_EQ(ck.state.adam.m, cs.adam.m);
  EXPECT_EQ(ck.state.adam.v, cs.adam.v);
  EXPECT_EQ(ck.state.best_weights, cs.best_weights);
  EXPECT_EQ(ck.state.epoch_loss_sum, cs.epoch_loss_sum);
  EXPECT_EQ(without_time(ck.state.log.epochs), without_time(cs.log.epochs));
  EXPECT_EQ(ck.state.log.best_epoch, cs.log.best_epoch);
}

TEST(Train, EarlyStopRestoresBestValidationWeights) {
  const auto split = split_cases(small_cases(4), 0.25, 3);
  TrainConfig cfg = quick_config();
  cfg.lr = 3e-3;
  cfg.max_epochs = 12;
  cfg.patience = 2;
  auto model = mini_model<float>(5);
  TrainState<float> state;
  const auto& log = train(*model, split, cfg, state);
  ASSERT_GE(log.best_epoch, 1u);
  const auto& best = log.epochs.at(log.best_epoch - 1);
  EXPECT_EQ(best.val_dice, log.best_val_dice);
  for (const auto& e : log.epochs) EXPECT_LE(e.val_dice, log.best_val_dice);
  if (log.stop_reason == "early_stop") {
    EXPECT_EQ(log.epochs.size(), log.best_epoch + cfg.patience);
  }
  EXPECT_EQ(weights_of(*model), state.best_weights);
  const auto re = evaluate(*model, split.validation, cfg, cfg.train_stride).mean();
  EXPECT_EQ(re.dice, log.best_val_dice);
}

TEST(Train, NonFiniteLossNamesBatchAndStep) {
  auto model = mini_model<float>();
  model->parameters().front().value.mutable_data()[0] = std::nanf("");
  TrainState<float> state;
  try {
    train(*model, DataSplit{small_cases(2), {}}, quick_config(), state);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("batch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 1"), std::string::npos) << msg;
  }
}

TEST(Train, RejectsInvalidConfigAndEmptyData) {
  auto model = mini_model<float>();
  TrainState<float> state;
  TrainConfig cfg = quick_config();
  EXPECT_THROW(train(*model, DataSplit{}, cfg, state), ContractError);
  cfg.batch_size = 0;
  EXPECT_THROW(train(*model, DataSplit{small_cases(1), {}}, cfg, state), ConfigError);
  cfg = quick_config();
  cfg.val_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TrainLogCsv, RoundTripsAndKeepsHeader) {
  TrainLog log;
  log.epochs = {{1, 0.5, 0.25, 0.125, 1.5}, {2, 0.1, 0.75, 0.6, 2.0}};
  const auto csv = log.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,val_dice,val_iou,seconds");
  EXPECT_EQ(TrainLog::parse_csv(csv), log.epochs);
  EXPECT_THROW(TrainLog::parse_csv("a,b\n"), ConfigError);
}

TEST(Evaluate, OracleModelScoresPerfectly) {
  const PetThresholdModel oracle;
  const auto cases = small_cases(3, 20);
  const auto cfg = quick_config();
  const auto r = evaluate(oracle, cases, cfg, 8);
  ASSERT_EQ(r.rows.size(), 3u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.dice, 1.0) << row.case_id;
    EXPECT_EQ(row.iou, 1.0) << row.case_id;
    EXPECT_LT(row.focal, 1e-6);
  }
  const auto mask = predict_mask(oracle, cases[0], cfg, 16);
  EXPECT_EQ(mask.depth, 20u);
  EXPECT_EQ(mask, crop_depth(cases[0].mask, 20));
}

TEST(Evaluate, RepeatableMeansAreArithmetic) {
  const auto model = mini_model<float>(2);
  const auto before = weights_of(*model);
  const auto cases = small_cases(3);
  const auto a = evaluate(*model, cases, quick_config(), 8), b = evaluate(*model, cases, quick_config(), 8);
  EXPECT_EQ(weights_of(*model), before);
  double sd = 0, si = 0, sf = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.rows[i].dice, b.rows[i].dice);
    EXPECT_EQ(a.rows[i].iou, b.rows[i].iou);
    EXPECT_EQ(a.rows[i].focal, b.rows[i].focal);
    sd += a.rows[i].dice;
    si += a.rows[i].iou;
    sf += a.rows[i].focal;
  }
  EXPECT_NEAR(a.mean().dice, sd / 3, 1e-15);
  EXPECT_NEAR(a.mean().iou, si / 3, 1e-15);
  EXPECT_NEAR(a.mean().focal, sf / 3, 1e-15);
  const auto csv = a.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,case,dice,iou,focal_loss,seconds");
  EXPECT_NE(csv.find("swin,mean,"), std::string::npos);
  EXPECT_THROW(evaluate(*model, {}, quick_config(), 8), ContractError);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto split = split_cases(small_cases(3), 0.3, 1);
  for (int pass = 0; pass < 2; ++pass) {
    std::string first, second;
    if (pass == 0) {
      auto model = mini_model<float>(6);
      TrainState<float> state;
      train(*model, split, quick_config(), state);
      first = serialize_checkpoint(*model, state);
      const auto ck = parse_checkpoint<float>(first);
      second = serialize_checkpoint(*ck.model, ck.state);
      EXPECT_EQ(weights_of(*ck.model), weights_of(*model));
    } else {
      auto model = mini_model<double>(6);
      TrainState<double> state;
      train(*model, split, quick_config(), state);
      first = serialize_checkpoint(*model, state);
      const auto ck = parse_checkpoint<double>(first);
      second = serialize_checkpoint(*ck.model, ck.state);
      EXPECT_EQ(weights_of(*ck.model), weights_of(*model));
      EXPECT_EQ(ck.state.log.best_val_loss, state.log.best_val_loss);
    }
    EXPECT_EQ(first, second);
  }
  auto model = mini_model<float>(7);
  TrainState<float> state;
  const auto path = std::filesystem::temp_directory_path() / "swinseg3d_ck_roundtrip.ckpt";
  save_checkpoint(path, *model, state);
  const auto ck = load_checkpoint<float>(path);
  std::filesystem::remove(path);
  EXPECT_EQ(serialize_checkpoint(*ck.model, ck.state), serialize_checkpoint(*model, state));
  EXPECT_EQ(ck.config, model->config());
}

TEST(Checkpoint, LoadingConvertsPrecision) {
  auto model = mini_model<float>(8);
  TrainState<float> state;
  const auto ck = parse_checkpoint<double>(serialize_checkpoint(*model, state));
  for (std::size_t i = 0; i < model->parameters().size(); ++i) {
    const auto& a = model->parameters()[i].value.values();
    const auto& b = ck.model->parameters()[i].value.values();
    for (std::size_t j = 0; j < a.size(); ++j) ASSERT_EQ(static_cast<double>(a[j]), b[j]);
  }
}

TEST(Checkpoint, FailuresAreDistinct) {
  auto model = mini_model<float>(9);
  TrainState<float> state;
  const std::string good = serialize_checkpoint(*model, state);
  auto kind_of = [](const std::string& bytes, const ModelConfig* expected = nullptr) {
    try {
      parse_checkpoint<float>(bytes, expected);
    } catch (const CheckpointError& e) {
      return e.checkpoint_kind();
    }
    ADD_FAILURE() << "checkpoint parsed";
    return CheckpointErrorKind::CorruptManifest;
  };
  std::string v2 = good;
  v2.replace(0, v2.find('\n'), "swinseg3d-checkpoint 2");
  EXPECT_EQ(kind_of(v2), CheckpointErrorKind::VersionMismatch);
  std::string garbled = good;
  garbled.insert(garbled.find('\n') + 1, "this is not a manifest line\n");
  EXPECT_EQ(kind_of(garbled), CheckpointErrorKind::CorruptManifest);
  EXPECT_EQ(kind_of("hello"), CheckpointErrorKind::CorruptManifest);
  EXPECT_EQ(kind_of(good.substr(0, good.size() - 10)), CheckpointErrorKind::Truncated);
  EXPECT_EQ(kind_of(good.substr(0, good.find("\nend\n"))), CheckpointErrorKind::Truncated);
  EXPECT_EQ(kind_of(good + "xx"), CheckpointErrorKind::CorruptManifest);
  auto other = miniature_config();
  other.base_dim = 16;
  EXPECT_EQ(kind_of(good, &other), CheckpointErrorKind::ConfigMismatch);
  const auto same = miniature_config();
  auto seeded = same;
  seeded.seed = 9;
  EXPECT_NO_THROW(parse_checkpoint<float>(good, &seeded));
  EXPECT_THROW(load_checkpoint<float>("/nonexistent/x.ckpt"), IoError);
}
