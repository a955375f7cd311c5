#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "swinseg3d/commands.hpp"
#include "swinseg3d/gemm.hpp"
#include "swinseg3d/model.hpp"

using namespace swinseg3d;

namespace {

RunConfig resolve_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  if (seed) cfg.set_seed(*seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SwinUNet3D lesion segmentation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "key = value run configuration");
  app.add_option("--seed", seed, "seed for model init, shuffling and synthesis");

  std::string out_dir, data_dir, out_path, checkpoint, pet, ct;
  std::optional<std::size_t> count, stride;
  std::optional<std::string> model_name;

  auto* synth = app.add_subcommand("synth", "generate synthetic PET/CT/MASK cases");
  synth->add_option("--out-dir", out_dir, "output directory")->required();
  synth->add_option("--count", count, "number of cases (default: synth_count)");

  auto* train = app.add_subcommand("train", "train a model on a case directory");
  train->add_option("--data-dir", data_dir, "directory of caseNNN volumes")->required();
  train->add_option("--model", model_name, "swin or unet3d (default: model key)")->check(CLI::IsMember({"swin", "unet3d"}));
  train->add_option("--out", out_path, "checkpoint path")->required();

  auto* infer = app.add_subcommand("infer", "segment one PET/CT pair");
  infer->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  infer->add_option("--pet", pet, "PET volume")->required();
  infer->add_option("--ct", ct, "CT volume")->required();
  infer->add_option("--out", out_path, "output mask volume")->required();
  infer->add_option("--stride", stride, "patch stride along depth (default: infer_stride)");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a case directory");
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  eval->add_option("--data-dir", data_dir, "directory of caseNNN volumes")->required();
  eval->add_option("--stride", stride, "patch stride along depth (default: infer_stride)");

  auto* compare = app.add_subcommand("compare", "train and compare SwinUNet3D with the 3D U-Net baseline");
  compare->add_option("--data-dir", data_dir, "directory of caseNNN volumes")->required();

  auto* summary = app.add_subcommand("summary", "print the parameter accounting of the configured model");

  CLI11_PARSE(app, argc, argv);

  try {
    configure_threads();
    const RunConfig cfg = resolve_config(config_path, seed);
    if (*synth) {
      cmd_synth(cfg, out_dir, count.value_or(cfg.synth_count), std::cout);
    } else if (*train) {
      cmd_train(cfg, data_dir, model_name ? parse_architecture(*model_name) : cfg.model.arch, out_path, std::cout);
    } else if (*infer) {
      cmd_infer(checkpoint, pet, ct, out_path, cfg.train, stride.value_or(cfg.train.infer_stride), std::cout);
    } else if (*eval) {
      cmd_eval(checkpoint, data_dir, cfg.train, stride.value_or(cfg.train.infer_stride), std::cout);
    } else if (*compare) {
      cmd_compare(cfg, data_dir, std::cout);
    } else if (*summary) {
      std::cout << model_summary(cfg.model) << '\n' << parameter_report();
    }
  } catch (const Error& e) {
    std::cerr << "error[" << e.kind() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
