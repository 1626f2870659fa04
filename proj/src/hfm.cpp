#include "emlab/hfm.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>

namespace emlab::hfm {

namespace {

constexpr double kPi = 3.14159265358979323846;

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

// Per-phase well source with production positive, as it enters the residual.
// Injectors deliver water against the total well-block mobility; with
// quadratic relative permeabilities and S=0 initial water, the water-phase
// mobility alone would be zero and no fluid could ever enter the domain.
struct WellSource {
  double oil = 0.0;
  double water = 0.0;
};

WellSource signed_well_source(double p_d, double s_d, double u_d,
                              const WellSpec& well, const FluidModel& fluid) {
  WellSource q;
  const double dp = p_d - u_d;
  if (well.kind == WellKind::Producer) {
    q.oil = well.wi * fluid.mobility_o(s_d) * dp;
    q.water = well.wi * fluid.mobility_w(s_d) * dp;
  } else {
    q.water = well.wi * fluid.mobility_total(s_d) * dp;
  }
  return q;
}

void check_assembly_inputs(const Model& model, const State& x_n,
                           const State& x_prev, const Eigen::VectorXd& u,
                           double dt) {
  const int n = model.grid.num_dofs();
  if (x_n.values.size() != n || x_prev.values.size() != n)
    throw std::invalid_argument("state dimension does not match the grid");
  if (u.size() != static_cast<Eigen::Index>(model.wells.size()))
    throw std::invalid_argument("control dimension does not match the wells");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!x_n.values.allFinite() || !x_prev.values.allFinite() || !u.allFinite())
    throw std::invalid_argument("non-finite state or control entries");
}

// Enumerates interior faces once; fn(c, nb, trans) with nb > c.
template <typename F>
void for_each_face(const Grid& grid, F&& fn) {
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const int c = grid.cell(i, j);
      if (i + 1 < grid.nx) {
        const int nb = grid.cell(i + 1, j);
        const double t =
            grid.dy * grid.dz / grid.dx * harmonic(grid.perm[c], grid.perm[nb]);
        fn(c, nb, t);
      }
      if (j + 1 < grid.ny) {
        const int nb = grid.cell(i, j + 1);
        const double t =
            grid.dx * grid.dz / grid.dy * harmonic(grid.perm[c], grid.perm[nb]);
        fn(c, nb, t);
      }
    }
  }
}

}  // namespace

void Grid::validate() const {
  if (nx <= 0 || ny <= 0) throw std::invalid_argument("grid must be non-empty");
  if (!(dx > 0.0 && dy > 0.0 && dz > 0.0))
    throw std::invalid_argument("cell dimensions must be positive");
  if (perm.size() != num_cells() || poro.size() != num_cells())
    throw std::invalid_argument("perm/poro size must equal the cell count");
  if ((perm.array() <= 0.0).any())
    throw std::invalid_argument("permeability must be positive");
  if ((poro.array() <= 0.0).any() || (poro.array() >= 1.0).any())
    throw std::invalid_argument("porosity must lie in (0,1)");
}

Eigen::VectorXd synthetic_log_normal_perm(int nx, int ny, double mean_perm,
                                          double log_sigma, double corr_cells,
                                          std::uint64_t seed) {
  const int n = nx * ny;
  Rng rng(seed);
  Eigen::VectorXd noise(n);
  for (int i = 0; i < n; ++i) noise[i] = rng.normal();

  // Separable Gaussian smoothing with reflected boundaries.
  const double sigma = std::max(corr_cells, 1.0e-6);
  const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  Eigen::VectorXd kernel(2 * half + 1);
  for (int k = -half; k <= half; ++k)
    kernel[k + half] = std::exp(-0.5 * (k / sigma) * (k / sigma));
  kernel /= kernel.sum();

  auto reflect = [](int idx, int limit) {
    while (idx < 0 || idx >= limit) {
      if (idx < 0) idx = -idx - 1;
      if (idx >= limit) idx = 2 * limit - idx - 1;
    }
    return idx;
  };

  Eigen::VectorXd tmp(n), smooth(n);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k)
        acc += kernel[k + half] * noise[j * nx + reflect(i + k, nx)];
      tmp[j * nx + i] = acc;
    }
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k)
        acc += kernel[k + half] * tmp[reflect(j + k, ny) * nx + i];
      smooth[j * nx + i] = acc;
    }

  const double mean = smooth.mean();
  const double sd = std::sqrt((smooth.array() - mean).square().sum() /
                              std::max(1, n - 1));
  Eigen::VectorXd field(n);
  const double log_mean = std::log(mean_perm);
  for (int i = 0; i < n; ++i) {
    const double z = sd > 0.0 ? (smooth[i] - mean) / sd : 0.0;
    field[i] = std::exp(log_mean + log_sigma * z);
  }
  return field;
}

double peaceman_well_index(const Grid& grid, int cell, double r_w) {
  const double r_eq = 0.2 * grid.dx;
  if (!(r_w > 0.0 && r_w < r_eq))
    throw std::invalid_argument("wellbore radius must lie in (0, 0.2*dx)");
  return 2.0 * kPi * grid.perm[cell] * grid.dz / std::log(r_eq / r_w);
}

void validate_wells(const Grid& grid, const std::vector<WellSpec>& wells) {
  std::vector<int> seen;
  for (const auto& w : wells) {
    if (w.cell < 0 || w.cell >= grid.num_cells())
      throw std::invalid_argument("well cell outside the grid: " + w.name);
    if (!(w.wi > 0.0))
      throw std::invalid_argument("well index must be positive: " + w.name);
    if (std::find(seen.begin(), seen.end(), w.cell) != seen.end())
      throw std::invalid_argument("wells share a grid block: " + w.name);
    seen.push_back(w.cell);
  }
}

int Schedule::period_at(double t) const {
  const int np = num_periods();
  if (np == 0) throw std::invalid_argument("schedule has no control periods");
  for (int k = 0; k < np; ++k)
    if (t <= control_times[k] * (1.0 + 1.0e-12)) return k;
  return np - 1;
}

Eigen::VectorXd Schedule::controls_at(double t_end) const {
  const auto& row = bhp[static_cast<std::size_t>(period_at(t_end))];
  return Eigen::Map<const Eigen::VectorXd>(row.data(),
                                           static_cast<Eigen::Index>(row.size()));
}

void Schedule::validate(const std::vector<WellSpec>& wells) const {
  if (control_times.empty())
    throw std::invalid_argument("schedule needs at least one control period");
  for (std::size_t k = 0; k < control_times.size(); ++k) {
    if (control_times[k] <= (k == 0 ? 0.0 : control_times[k - 1]))
      throw std::invalid_argument("control times must be strictly increasing");
  }
  if (std::abs(control_times.back() - horizon) > 1.0e-9 * std::max(horizon, 1.0))
    throw std::invalid_argument("last control time must equal the horizon");
  if (bhp.size() != control_times.size())
    throw std::invalid_argument("one BHP row per control period required");
  for (const auto& row : bhp) {
    if (row.size() != wells.size())
      throw std::invalid_argument("one BHP per well per period required");
    for (double v : row)
      if (!(v > 0.0)) throw std::invalid_argument("BHPs must be positive");
  }
}

State uniform_state(const Grid& grid, double pressure, double saturation) {
  State x;
  x.values.resize(grid.num_dofs());
  for (int c = 0; c < grid.num_cells(); ++c) {
    x.values[2 * c] = pressure;
    x.values[2 * c + 1] = saturation;
  }
  return x;
}

WellRates well_rates(double p_d, double s_d, double u_d, const WellSpec& well,
                     const FluidModel& fluid) {
  const double s = std::clamp(s_d, 0.0, 1.0);
  WellRates r;
  if (well.kind == WellKind::Producer) {
    r.oil = well.wi * fluid.mobility_o(s) * (p_d - u_d);
    r.water = well.wi * fluid.mobility_w(s) * (p_d - u_d);
  } else {
    // Positive when fluid enters the reservoir.
    r.water = well.wi * fluid.mobility_total(s) * (u_d - p_d);
  }
  return r;
}

double total_injection_rate(const State& x, const Eigen::VectorXd& u,
                            const std::vector<WellSpec>& wells,
                            const FluidModel& fluid) {
  double total = 0.0;
  for (std::size_t w = 0; w < wells.size(); ++w) {
    if (wells[w].kind != WellKind::Injector) continue;
    total += well_rates(x.pressure(wells[w].cell), x.saturation(wells[w].cell),
                        u[static_cast<Eigen::Index>(w)], wells[w], fluid)
                 .water;
  }
  return total;
}

Eigen::VectorXd assemble_residual(const Model& model, const State& x_n,
                                  const State& x_prev, const Eigen::VectorXd& u,
                                  double dt) {
  check_assembly_inputs(model, x_n, x_prev, u, dt);
  const Grid& grid = model.grid;
  const FluidModel& fluid = model.fluid;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(grid.num_dofs());

  const double vol = grid.cell_volume();
  for (int c = 0; c < grid.num_cells(); ++c) {
    const double acc =
        grid.poro[c] * vol / dt * (x_n.saturation(c) - x_prev.saturation(c));
    g[2 * c] -= acc;      // oil: d(1-S)/dt
    g[2 * c + 1] += acc;  // water
  }

  for_each_face(grid, [&](int c, int nb, double trans) {
    const double dp = x_n.pressure(c) - x_n.pressure(nb);
    const double s_up = dp >= 0.0 ? x_n.saturation(c) : x_n.saturation(nb);
    const double fo = trans * fluid.mobility_o(s_up) * dp;
    const double fw = trans * fluid.mobility_w(s_up) * dp;
    g[2 * c] += fo;
    g[2 * c + 1] += fw;
    g[2 * nb] -= fo;
    g[2 * nb + 1] -= fw;
  });

  for (std::size_t w = 0; w < model.wells.size(); ++w) {
    const WellSpec& well = model.wells[w];
    const WellSource q = signed_well_source(
        x_n.pressure(well.cell), x_n.saturation(well.cell),
        u[static_cast<Eigen::Index>(w)], well, fluid);
    g[2 * well.cell] += q.oil;
    g[2 * well.cell + 1] += q.water;
  }
  return g;
}

Jacobians assemble_jacobians(const Model& model, const State& x_n,
                             const State& x_prev, const Eigen::VectorXd& u,
                             double dt) {
  check_assembly_inputs(model, x_n, x_prev, u, dt);
  const Grid& grid = model.grid;
  const FluidModel& fluid = model.fluid;
  const int n = grid.num_dofs();

  std::vector<Eigen::Triplet<double>> tj, tb, tc;
  tj.reserve(static_cast<std::size_t>(26 * grid.num_cells()));
  tb.reserve(static_cast<std::size_t>(2 * grid.num_cells()));

  const double vol = grid.cell_volume();
  for (int c = 0; c < grid.num_cells(); ++c) {
    const double a = grid.poro[c] * vol / dt;
    tj.emplace_back(2 * c, 2 * c + 1, -a);
    tj.emplace_back(2 * c + 1, 2 * c + 1, a);
    tb.emplace_back(2 * c, 2 * c + 1, a);
    tb.emplace_back(2 * c + 1, 2 * c + 1, -a);
  }

  for_each_face(grid, [&](int c, int nb, double trans) {
    const double dp = x_n.pressure(c) - x_n.pressure(nb);
    const int up = dp >= 0.0 ? c : nb;
    const double s_up = x_n.saturation(up);
    const double lo = fluid.mobility_o(s_up);
    const double lw = fluid.mobility_w(s_up);
    const double dlo = fluid.dkro(s_up) / fluid.mu_o;
    const double dlw = fluid.dkrw(s_up) / fluid.mu_w;
    // Rows of cell c, then rows of nb with reversed sign.
    for (int side = 0; side < 2; ++side) {
      const int row = side == 0 ? c : nb;
      const double sgn = side == 0 ? 1.0 : -1.0;
      tj.emplace_back(2 * row, 2 * c, sgn * trans * lo);
      tj.emplace_back(2 * row, 2 * nb, -sgn * trans * lo);
      tj.emplace_back(2 * row, 2 * up + 1, sgn * trans * dlo * dp);
      tj.emplace_back(2 * row + 1, 2 * c, sgn * trans * lw);
      tj.emplace_back(2 * row + 1, 2 * nb, -sgn * trans * lw);
      tj.emplace_back(2 * row + 1, 2 * up + 1, sgn * trans * dlw * dp);
    }
  });

  for (std::size_t w = 0; w < model.wells.size(); ++w) {
    const WellSpec& well = model.wells[w];
    const int d = well.cell;
    const double p = x_n.pressure(d);
    const double s = x_n.saturation(d);
    const double dp = p - u[static_cast<Eigen::Index>(w)];
    const auto wcol = static_cast<int>(w);
    if (well.kind == WellKind::Producer) {
      const double lo = fluid.mobility_o(s);
      const double lw = fluid.mobility_w(s);
      const double dlo = fluid.dkro(s) / fluid.mu_o;
      const double dlw = fluid.dkrw(s) / fluid.mu_w;
      tj.emplace_back(2 * d, 2 * d, well.wi * lo);
      tj.emplace_back(2 * d, 2 * d + 1, well.wi * dlo * dp);
      tj.emplace_back(2 * d + 1, 2 * d, well.wi * lw);
      tj.emplace_back(2 * d + 1, 2 * d + 1, well.wi * dlw * dp);
      tc.emplace_back(2 * d, wcol, -well.wi * lo);
      tc.emplace_back(2 * d + 1, wcol, -well.wi * lw);
    } else {
      const double lt = fluid.mobility_total(s);
      const double dlt = fluid.dkrw(s) / fluid.mu_w + fluid.dkro(s) / fluid.mu_o;
      tj.emplace_back(2 * d + 1, 2 * d, well.wi * lt);
      tj.emplace_back(2 * d + 1, 2 * d + 1, well.wi * dlt * dp);
      tc.emplace_back(2 * d + 1, wcol, -well.wi * lt);
    }
  }

  Jacobians out;
  out.j.resize(n, n);
  out.b.resize(n, n);
  out.c.resize(n, static_cast<int>(model.wells.size()));
  out.j.setFromTriplets(tj.begin(), tj.end());
  out.b.setFromTriplets(tb.begin(), tb.end());
  out.c.setFromTriplets(tc.begin(), tc.end());
  return out;
}

NewtonResult newton_step_solve(const Model& model, const State& x_prev,
                               const Eigen::VectorXd& u, double dt,
                               const NewtonOptions& opts) {
  if (!(opts.tol_rel > 0.0) && !(opts.tol_abs > 0.0))
    throw std::invalid_argument("newton tolerance must be positive");

  NewtonResult result;
  result.x = x_prev;
  Eigen::VectorXd g = assemble_residual(model, result.x, x_prev, u, dt);
  const double scale = g.norm();
  const double tol = std::max(opts.tol_rel * scale, opts.tol_abs);
  result.residual_norm = scale;
  if (scale <= tol) {
    for (int c = 0; c < model.grid.num_cells(); ++c)
      result.x.saturation(c) = std::clamp(result.x.saturation(c), 0.0, 1.0);
    return result;
  }

  Eigen::SparseLU<SparseMat> solver;
  for (int it = 1; it <= opts.max_iter; ++it) {
    const Jacobians jac = assemble_jacobians(model, result.x, x_prev, u, dt);
    solver.compute(jac.j);
    if (solver.info() != Eigen::Success)
      throw SingularSystem("singular Jacobian in newton_step_solve");
    const Eigen::VectorXd delta = solver.solve(-g);
    if (solver.info() != Eigen::Success)
      throw SingularSystem("linear solve failed in newton_step_solve");
    result.x.values += delta;
    for (int c = 0; c < model.grid.num_cells(); ++c) {
      result.x.saturation(c) = std::clamp(result.x.saturation(c),
                                          -opts.sat_clip, 1.0 + opts.sat_clip);
    }
    result.iterations = it;
    g = assemble_residual(model, result.x, x_prev, u, dt);
    result.residual_norm = g.norm();
    if (result.residual_norm <= tol) {
      for (int c = 0; c < model.grid.num_cells(); ++c)
        result.x.saturation(c) = std::clamp(result.x.saturation(c), 0.0, 1.0);
      return result;
    }
  }
  throw NonConvergence("newton did not converge in " +
                       std::to_string(opts.max_iter) + " iterations");
}

namespace {

void append_step(HfmTrajectory& traj, const Model& model,
                 const Schedule& schedule, const State& x_new, double t_new,
                 double dt, double injected, double produced_w,
                 bool store_jacobians, const State& x_prev) {
  const Eigen::VectorXd u = schedule.controls_at(t_new - 0.5 * dt);
  std::vector<WellRates> rates;
  rates.reserve(model.wells.size());
  for (std::size_t w = 0; w < model.wells.size(); ++w) {
    const WellSpec& well = model.wells[w];
    rates.push_back(well_rates(x_new.pressure(well.cell),
                               x_new.saturation(well.cell),
                               u[static_cast<Eigen::Index>(w)], well,
                               model.fluid));
  }
  traj.qoi.push_back(std::move(rates));
  traj.dts.push_back(dt);
  traj.times.push_back(t_new);
  traj.injected_water.push_back(injected);
  traj.produced_water.push_back(produced_w);

  const double vp = model.grid.pore_volume();
  const double prev_pvi = traj.pvi.empty() ? 0.0 : traj.pvi.back();
  double inj_rate = 0.0;
  for (std::size_t w = 0; w < model.wells.size(); ++w)
    if (model.wells[w].kind == WellKind::Injector)
      inj_rate += traj.qoi.back()[w].water;
  traj.pvi.push_back(prev_pvi + inj_rate * dt / vp);

  if (store_jacobians) {
    const Jacobians jac = assemble_jacobians(model, x_new, x_prev, u, dt);
    traj.jac_records.push_back({jac.j, jac.b, jac.c});
  }
  traj.states.push_back(x_new);
}

// Water volumes implied by the implicit step: rates at the end state times dt.
void step_volumes(const Model& model, const State& x_new,
                  const Eigen::VectorXd& u, double dt, double& injected,
                  double& produced) {
  for (std::size_t w = 0; w < model.wells.size(); ++w) {
    const WellSpec& well = model.wells[w];
    const WellRates r =
        well_rates(x_new.pressure(well.cell), x_new.saturation(well.cell),
                   u[static_cast<Eigen::Index>(w)], well, model.fluid);
    if (well.kind == WellKind::Injector)
      injected += r.water * dt;
    else
      produced += r.water * dt;
  }
}

double max_saturation_change(const State& a, const State& b, int num_cells) {
  double m = 0.0;
  for (int c = 0; c < num_cells; ++c)
    m = std::max(m, std::abs(a.values[2 * c + 1] - b.values[2 * c + 1]));
  return m;
}

}  // namespace

HfmTrajectory simulate_hfm(const Model& model, const Schedule& schedule,
                           const State& initial, const SimOptions& opts) {
  model.grid.validate();
  validate_wells(model.grid, model.wells);
  schedule.validate(model.wells);

  std::vector<double> boundaries = schedule.control_times;
  boundaries.insert(boundaries.end(), opts.extra_snap_times.begin(),
                    opts.extra_snap_times.end());
  std::sort(boundaries.begin(), boundaries.end());
  boundaries.erase(std::unique(boundaries.begin(), boundaries.end()),
                   boundaries.end());

  HfmTrajectory traj;
  traj.states.push_back(initial);

  const double horizon = schedule.horizon;
  const double eps = 1.0e-9 * std::max(horizon, 1.0);
  double t = 0.0;
  double dt_next = std::min(opts.dt_init, opts.dt_max);

  while (t < horizon - eps) {
    double dt = std::min(dt_next, opts.dt_max);
    // Snap to the next control boundary (or the horizon).
    double target = horizon;
    for (double b : boundaries) {
      if (b > t + eps) {
        target = std::min(target, b);
        break;
      }
    }
    bool snapped = false;
    if (t + dt >= target - eps) {
      dt = target - t;
      snapped = true;
    }

    int cuts = 0;
    for (;;) {
      const double t_new = snapped && cuts == 0 ? target : t + dt;
      const Eigen::VectorXd u = schedule.controls_at(t + 0.5 * dt);
      try {
        NewtonResult sol =
            newton_step_solve(model, traj.states.back(), u, dt, opts.newton);
        if (max_saturation_change(sol.x, traj.states.back(),
                                  model.grid.num_cells()) >
            opts.max_ds_per_step) {
          throw NonConvergence("saturation change exceeded the step target");
        }
        double injected = 0.0, produced = 0.0;
        step_volumes(model, sol.x, u, dt, injected, produced);
        append_step(traj, model, schedule, sol.x, t_new, dt, injected, produced,
                    opts.store_jacobians, traj.states.back());
        t = t_new;
        dt_next = sol.iterations <= opts.newton_iters_for_growth && cuts == 0
                      ? dt * opts.dt_growth
                      : dt;
        break;
      } catch (const NonConvergence&) {
        if (++cuts > opts.max_dt_cuts) throw;
        dt /= opts.dt_cut;
        snapped = false;
      }
    }
  }
  return traj;
}

HfmTrajectory simulate_hfm_on_grid(const Model& model, const Schedule& schedule,
                                   const State& initial,
                                   const std::vector<double>& dts,
                                   const SimOptions& opts) {
  model.grid.validate();
  validate_wells(model.grid, model.wells);
  schedule.validate(model.wells);

  HfmTrajectory traj;
  traj.states.push_back(initial);
  double t = 0.0;
  for (double dt : dts) {
    // Substep on Newton failure; the grid point itself is what gets recorded.
    // Each halving deepens by one level, bounded by max_dt_cuts.
    double injected = 0.0, produced = 0.0;
    State x = traj.states.back();
    double t_sub = t;
    std::vector<std::pair<double, int>> stack{{dt, 0}};
    while (!stack.empty()) {
      const auto [d, depth] = stack.back();
      stack.pop_back();
      const Eigen::VectorXd u = schedule.controls_at(t_sub + 0.5 * d);
      try {
        NewtonResult sol = newton_step_solve(model, x, u, d, opts.newton);
        step_volumes(model, sol.x, u, d, injected, produced);
        x = sol.x;
        t_sub += d;
      } catch (const NonConvergence&) {
        if (depth + 1 > opts.max_dt_cuts)
          throw NonConvergence("prescribed step failed after max substepping");
        stack.emplace_back(0.5 * d, depth + 1);
        stack.emplace_back(0.5 * d, depth + 1);
      }
    }
    t += dt;
    append_step(traj, model, schedule, x, t, dt, injected, produced, false,
                traj.states[traj.states.size() - 1]);
  }
  return traj;
}

std::vector<double> compute_pvi(const HfmTrajectory& traj, const Grid& grid,
                                const std::vector<WellSpec>& wells) {
  const double vp = grid.pore_volume();
  std::vector<double> pvi;
  pvi.reserve(traj.dts.size());
  double acc = 0.0;
  for (int n = 0; n < traj.num_steps(); ++n) {
    double inj = 0.0;
    for (std::size_t w = 0; w < wells.size(); ++w)
      if (wells[w].kind == WellKind::Injector)
        inj += traj.qoi[static_cast<std::size_t>(n)][w].water;
    acc += inj * traj.dts[static_cast<std::size_t>(n)] / vp;
    pvi.push_back(acc);
  }
  return pvi;
}

double water_balance_defect(const HfmTrajectory& traj, const Model& model) {
  double injected = 0.0, produced = 0.0;
  for (std::size_t n = 0; n < traj.dts.size(); ++n) {
    injected += traj.injected_water[n];
    produced += traj.produced_water[n];
  }
  const double vol = model.grid.cell_volume();
  double storage = 0.0;
  for (int c = 0; c < model.grid.num_cells(); ++c) {
    storage += model.grid.poro[c] * vol *
               (traj.states.back().saturation(c) - traj.states.front().saturation(c));
  }
  const double scale =
      std::max({std::abs(injected), std::abs(produced), std::abs(storage), 1.0e-30});
  return std::abs(injected - produced - storage) / scale;
}

}  // namespace emlab::hfm
