#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "emlab/core.hpp"

namespace emlab::hfm {

using SparseMat = Eigen::SparseMatrix<double>;

// Structured 2D grid with per-cell isotropic permeability (m2) and porosity.
// State ordering interleaves pressure and water saturation per cell:
// [p_1 S_1 ... p_Nc S_Nc].
struct Grid {
  int nx = 0;
  int ny = 0;
  double dx = 0.0;  // m
  double dy = 0.0;
  double dz = 0.0;
  Eigen::VectorXd perm;  // m2, size nx*ny
  Eigen::VectorXd poro;  // -, size nx*ny

  int num_cells() const { return nx * ny; }
  int num_dofs() const { return 2 * num_cells(); }
  int cell(int i, int j) const { return j * nx + i; }
  double cell_volume() const { return dx * dy * dz; }
  double pore_volume() const { return poro.sum() * cell_volume(); }
  void validate() const;
};

// Log-normal permeability: Gaussian-smoothed white noise, rescaled to the
// requested log-mean/log-std. Deterministic for a fixed seed.
Eigen::VectorXd synthetic_log_normal_perm(int nx, int ny, double mean_perm,
                                          double log_sigma, double corr_cells,
                                          std::uint64_t seed);

struct FluidModel {
  double mu_o = 3.0e-3;  // Pa.s
  double mu_w = 1.0e-3;
  double krw_exponent = 2.0;
  double kro_exponent = 2.0;

  double krw(double s) const { return std::pow(std::clamp(s, 0.0, 1.0), krw_exponent); }
  double kro(double s) const { return std::pow(std::clamp(1.0 - s, 0.0, 1.0), kro_exponent); }
  // Relative permeabilities are constant outside [0,1], so the derivatives
  // vanish there (keeps the Jacobian consistent with the clamped residual).
  double dkrw(double s) const {
    if (s < 0.0 || s > 1.0) return 0.0;
    return krw_exponent * std::pow(s, krw_exponent - 1.0);
  }
  double dkro(double s) const {
    if (s < 0.0 || s > 1.0) return 0.0;
    return -kro_exponent * std::pow(1.0 - s, kro_exponent - 1.0);
  }
  double mobility_w(double s) const { return krw(s) / mu_w; }
  double mobility_o(double s) const { return kro(s) / mu_o; }
  double mobility_total(double s) const { return mobility_w(s) + mobility_o(s); }
};

enum class WellKind { Producer, Injector };

struct WellSpec {
  std::string name;
  int cell = 0;
  WellKind kind = WellKind::Producer;
  double wi = 0.0;   // Peaceman well index, m3/(Pa.s) per unit mobility
  double r_w = 0.1;  // m
};

// Peaceman index for an isotropic square-cell penetration.
double peaceman_well_index(const Grid& grid, int cell, double r_w);

void validate_wells(const Grid& grid, const std::vector<WellSpec>& wells);

// Piecewise-constant BHP controls: period k covers (control_times[k-1],
// control_times[k]] with control_times[-1] = 0 implied.
struct Schedule {
  double horizon = 0.0;                     // s
  std::vector<double> control_times;        // s, strictly increasing, last == horizon
  std::vector<std::vector<double>> bhp;     // [period][well], Pa

  int num_periods() const { return static_cast<int>(control_times.size()); }
  int period_at(double t) const;
  // Control vector governing a step that ends at t_end (steps never straddle
  // period boundaries in adaptive runs; prescribed grids sample at t_end).
  Eigen::VectorXd controls_at(double t_end) const;
  void validate(const std::vector<WellSpec>& wells) const;
};

struct State {
  Eigen::VectorXd values;  // length 2*Nc

  double pressure(int cell) const { return values[2 * cell]; }
  double saturation(int cell) const { return values[2 * cell + 1]; }
  double& pressure(int cell) { return values[2 * cell]; }
  double& saturation(int cell) { return values[2 * cell + 1]; }
};

State uniform_state(const Grid& grid, double pressure, double saturation);

// Per-well rates (m3/s) with production positive. Producers report oil and
// water; injectors inject only water but with total well-block mobility, and
// report the injected volume as a positive magnitude.
struct WellRates {
  double oil = 0.0;
  double water = 0.0;
};

WellRates well_rates(double p_d, double s_d, double u_d, const WellSpec& well,
                     const FluidModel& fluid);

// Sum of positive injector water rates, m3/s.
double total_injection_rate(const State& x, const Eigen::VectorXd& u,
                            const std::vector<WellSpec>& wells,
                            const FluidModel& fluid);

struct Model {
  Grid grid;
  FluidModel fluid;
  std::vector<WellSpec> wells;
};

// Residual of the fully implicit finite-volume step: accumulation + two-point
// flux with upwinded mobilities + Peaceman well terms; rows ordered
// [oil_1 water_1 ... oil_Nc water_Nc], matching the state layout.
Eigen::VectorXd assemble_residual(const Model& model, const State& x_n,
                                  const State& x_prev, const Eigen::VectorXd& u,
                                  double dt);

struct Jacobians {
  SparseMat j;  // d g / d x_n
  SparseMat b;  // d g / d x_prev
  SparseMat c;  // d g / d u
};

Jacobians assemble_jacobians(const Model& model, const State& x_n,
                             const State& x_prev, const Eigen::VectorXd& u,
                             double dt);

struct NewtonOptions {
  double tol_rel = 1.0e-10;
  double tol_abs = 0.0;  // 0 => derived from the initial residual scale
  int max_iter = 12;
  double sat_clip = 0.2;  // Newton iterates may overshoot this far before clamping
};

struct NewtonResult {
  State x;
  int iterations = 0;
  double residual_norm = 0.0;
};

NewtonResult newton_step_solve(const Model& model, const State& x_prev,
                               const Eigen::VectorXd& u, double dt,
                               const NewtonOptions& opts);

struct JacRecord {
  SparseMat j;
  SparseMat b;
  SparseMat c;
};

struct HfmTrajectory {
  std::vector<State> states;  // states[0] = initial condition; size N_t + 1
  std::vector<double> dts;    // size N_t
  std::vector<double> times;  // size N_t, end times of each step
  std::vector<std::vector<WellRates>> qoi;  // [step][well], size N_t
  std::vector<double> pvi;                  // size N_t
  // Exact per-step water volumes (m3) implied by the implicit steps; these
  // differ from dt*qoi only when a prescribed-grid step was substepped.
  std::vector<double> injected_water;
  std::vector<double> produced_water;
  std::vector<JacRecord> jac_records;  // size N_t when requested

  int num_steps() const { return static_cast<int>(dts.size()); }
};

struct SimOptions {
  NewtonOptions newton;
  double dt_init = 1.0 * units::day;
  double dt_max = 25.0 * units::day;
  double dt_growth = 1.5;
  double dt_cut = 2.0;
  double max_ds_per_step = 0.1;
  int max_dt_cuts = 14;
  int newton_iters_for_growth = 4;
  bool store_jacobians = false;
  std::vector<double> extra_snap_times;  // honored like control boundaries
};

// Adaptive backward-Euler time stepping; steps never straddle control-period
// boundaries (or extra snap times).
HfmTrajectory simulate_hfm(const Model& model, const Schedule& schedule,
                           const State& initial, const SimOptions& opts);

// Backward Euler on a prescribed time grid (used for runs paired with the
// ROM, which mirrors the primary training grid). Newton failures trigger
// internal substepping; only grid-point states are recorded.
HfmTrajectory simulate_hfm_on_grid(const Model& model, const Schedule& schedule,
                                   const State& initial,
                                   const std::vector<double>& dts,
                                   const SimOptions& opts);

// PVI recomputed from stored injector rates: running injected volume over
// total pore volume.
std::vector<double> compute_pvi(const HfmTrajectory& traj, const Grid& grid,
                                const std::vector<WellSpec>& wells);

// Cumulative injected minus produced water against pore-volume storage change;
// returns the relative defect (conservation oracle input).
double water_balance_defect(const HfmTrajectory& traj, const Model& model);

}  // namespace emlab::hfm
