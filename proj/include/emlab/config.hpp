#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emlab/error_models.hpp"
#include "emlab/hfm.hpp"
#include "emlab/io.hpp"

namespace emlab::pipe {

struct WellPlacement {
  std::string name;
  int i = 0;
  int j = 0;
  bool injector = false;
  double r_w = 0.1;  // m
};

// Everything a full experiment needs, read from one JSON config file. Field
// units at this boundary: md, days, psi, cP, meters; SI everywhere inside.
struct ExperimentConfig {
  // reservoir
  int nx = 25;
  int ny = 25;
  double dx_m = 10.0;
  double dy_m = 10.0;
  double dz_m = 10.0;
  double porosity = 0.2;
  double perm_mean_md = 80.0;
  double perm_log_sigma = 0.8;
  double perm_corr_cells = 3.0;
  // fluid (viscosities are assumptions; the source experiments leave them
  // unstated)
  double mu_o_cp = 3.0;
  double mu_w_cp = 1.0;
  double krw_exponent = 2.0;
  double kro_exponent = 2.0;
  std::vector<WellPlacement> wells;
  // initial condition
  double init_pressure_psi = 3000.0;
  double init_saturation = 0.0;
  // schedules
  double horizon_days = 1400.0;
  double training_period_days = 200.0;
  double test_period_days = 175.0;
  double producer_bhp_psi = 2700.0;
  double injector_bhp_psi = 3400.0;
  double training_amplitude = 0.25;  // BHP wobble, relative to the P/I spread
  int n_tpwl_runs = 3;
  // solver
  double newton_tol_rel = 1.0e-10;
  int max_newton_iters = 12;
  double dt_init_days = 1.0;
  double dt_max_days = 25.0;
  double dt_growth = 1.5;
  double dt_cut = 2.0;
  double max_ds_per_step = 0.1;
  int max_dt_cuts = 14;
  // rom
  int num_pressure_modes = 24;
  int num_saturation_modes = 36;
  double pressure_scale_psi = 1500.0;
  // error modeling
  err::EmmlOptions emml;
  // experiment
  int n_bhp = 80;
  int n_train = 20;
  int n_romes = 10;
  double perturb_amplitude = 0.35;  // test-schedule draws, relative to spread
  int workers = 0;                  // 0: hardware concurrency
  std::uint64_t master_seed = 20260809;

  static ExperimentConfig from_json(const io::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  io::json to_json() const;
  std::uint64_t config_hash() const;

  hfm::Model build_model() const;
  hfm::State initial_state(const hfm::Grid& grid) const;
  hfm::SimOptions sim_options() const;
  // Piecewise-constant training BHP profiles; run 0 is the primary run used
  // for linearization.
  hfm::Schedule tpwl_training_schedule(int run_index) const;
  double bhp_spread_pa() const;
};

}  // namespace emlab::pipe
