#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "univ/error.hpp"
#include "univ_cli/commands.hpp"

namespace {

using namespace univ::cli;

RunConfig config_from(const std::string& path) {
  RunConfig cfg = load_run_config(path);
  if (apply_seed_override(cfg)) std::cerr << "seed overridden by UNIV_SEED: " << cfg.seed << "\n";
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"univ: cross-modal pre-training at toy scale"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write synthetic aligned visible/infrared pairs and a manifest");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--pairs", gen.pairs, "Number of pairs")->required();
  gen_cmd->add_option("--seed", gen.seed, "Seed");
  gen_cmd->add_option("--night-fraction", gen.night_fraction, "Fraction rendered at night")->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--image-size", gen.image_size, "Square image size in pixels");

  std::string config_path;
  std::string out_dir;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Train a student against a frozen teacher");
  pretrain_cmd->add_option("--config", config_path, "Run configuration")->required()->check(CLI::ExistingFile);
  pretrain_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "Compare mse, nce and pccl objectives");
  ablate_cmd->add_option("--config", config_path, "Run configuration")->required()->check(CLI::ExistingFile);

  auto* forget_cmd = app.add_subcommand("forget", "Run the five-row forgetting grid");
  forget_cmd->add_option("--config", config_path, "Run configuration")->required()->check(CLI::ExistingFile);

  std::vector<std::size_t> ranks;
  auto* sweep_cmd = app.add_subcommand("sweep-rank", "Train once per LoRA rank");
  sweep_cmd->add_option("--config", config_path, "Run configuration")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--ranks", ranks, "Ranks to try")->required()->delimiter(',');

  MergeOptions merge;
  auto* merge_cmd = app.add_subcommand("merge", "Fold adapters into a checkpoint");
  merge_cmd->add_option("--checkpoint", merge.checkpoint, "Encoder checkpoint")->required()->check(CLI::ExistingFile);
  merge_cmd->add_option("--adapters", merge.adapters, "Adapter checkpoint")->required()->check(CLI::ExistingFile);
  merge_cmd->add_option("--out", merge.out, "Merged checkpoint")->required();
  merge_cmd->add_option("--seed", merge.seed, "Seed for verification inputs");

  DumpOptions dump;
  auto* dump_cmd = app.add_subcommand("dump-matrices", "Write similarity, pseudo-label and attention matrices");
  dump_cmd->add_option("--teacher", dump.teacher, "Teacher checkpoint")->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--student", dump.student, "Student checkpoint")->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--adapters", dump.adapters, "Student adapters");
  dump_cmd->add_option("--manifest", dump.manifest, "Pair manifest")->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--out", dump.out, "Output directory")->required();
  dump_cmd->add_option("--count", dump.count, "Number of pairs");
  dump_cmd->add_option("--tau", dump.tau, "Temperature");
  dump_cmd->add_option("--gamma", dump.gamma, "Pseudo-label threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*gen_cmd) gen_data(gen, std::cerr);
    if (*pretrain_cmd) pretrain(config_from(config_path), out_dir, std::cerr);
    if (*ablate_cmd) ablate(config_from(config_path), std::cout, std::cerr);
    if (*forget_cmd) forget(config_from(config_path), std::cout, std::cerr);
    if (*sweep_cmd) sweep_rank(config_from(config_path), ranks, std::cout, std::cerr);
    if (*merge_cmd) univ::cli::merge(merge, std::cout);
    if (*dump_cmd) dump_matrices(dump, std::cerr);
  } catch (const univ::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return kOk;
}
