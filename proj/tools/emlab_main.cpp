// emlab: two-phase reservoir simulation, POD-TPWL surrogates, and
// machine-learned surrogate-error models, driven by a staged experiment
// pipeline.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <string>

#include "emlab/pipeline.hpp"

namespace fs = std::filesystem;
using namespace emlab;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "emlab_out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = -1;
  bool resume = false;
};

pipe::ExperimentConfig load_config(const CommonArgs& args) {
  pipe::ExperimentConfig cfg = pipe::ExperimentConfig::load(args.config_path);
  if (args.seed_set) cfg.master_seed = args.seed;
  if (args.workers >= 0) cfg.workers = args.workers;
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "override the master seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--workers", args.workers, "worker thread count");
  cmd->add_flag("--resume", args.resume, "skip stages with valid artifacts");
}

int run_through_stage(const CommonArgs& args, const std::string& stage) {
  pipe::Experiment experiment(load_config(args), args.out_dir, args.resume);
  experiment.run_through(stage);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Two-phase flow laboratory: high-fidelity simulation, POD-TPWL "
      "surrogates, and machine-learned error models"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string final_stage;

  auto* sim = app.add_subcommand(
      "simulate-hfm", "run the primary training schedule at high fidelity");
  add_common(sim, args);
  sim->callback([&args] {
    const pipe::ExperimentConfig cfg = load_config(args);
    const hfm::Model model = cfg.build_model();
    const hfm::Schedule schedule = cfg.tpwl_training_schedule(0);
    const hfm::HfmTrajectory traj = hfm::simulate_hfm(
        model, schedule, cfg.initial_state(model.grid), cfg.sim_options());
    pipe::save_trajectory(args.out_dir, "hfm", traj, model.wells);
    std::printf("wrote %d steps to %s\n", traj.num_steps(),
                args.out_dir.c_str());
  });

  const std::pair<const char*, const char*> stage_commands[] = {
      {"build-rom", "rom"},
      {"gen-schedules", "schedules"},
      {"split", "split"},
      {"train-emml", "bundle"},
      {"predict", "predict"},
      {"romes", "romes"},
      {"metrics", "metrics"},
      {"plot-data", "plot-data"},
      {"run-all", "plot-data"}};
  const char* descriptions[] = {
      "training runs, POD basis, and TPWL operators",
      "perturbed BHP schedule set and perturbation metrics",
      "train/test/ROMES split over the perturbation plane",
      "paired training runs, samples, and the error-model bundle",
      "surrogate runs and corrected QoIs for every case",
      "ROMES pairs and Gaussian-process post-correction",
      "time-integrated error report",
      "plot-ready CSV tables",
      "the full pipeline"};
  for (std::size_t k = 0; k < std::size(stage_commands); ++k) {
    auto* cmd =
        app.add_subcommand(stage_commands[k].first, descriptions[k]);
    add_common(cmd, args);
    const std::string stage = stage_commands[k].second;
    cmd->callback([&args, &final_stage, stage] { final_stage = stage; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (!final_stage.empty()) return run_through_stage(args, final_stage);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
