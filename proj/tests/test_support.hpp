#pragma once

#include <Eigen/Dense>

#include "emlab/core.hpp"
#include "emlab/hfm.hpp"

namespace emlab::testing {

using namespace emlab::hfm;

// Small homogeneous reservoir with one injector/producer pair in opposite
// corners; sized so desk-scale runs finish in milliseconds.
inline Model tiny_model(int nx, int ny, double perm_md = 50.0) {
  Model m;
  m.grid.nx = nx;
  m.grid.ny = ny;
  m.grid.dx = m.grid.dy = m.grid.dz = 10.0;
  m.grid.perm = Eigen::VectorXd::Constant(nx * ny, perm_md * units::millidarcy);
  m.grid.poro = Eigen::VectorXd::Constant(nx * ny, 0.2);
  m.fluid.mu_o = 3.0 * units::centipoise;
  m.fluid.mu_w = 1.0 * units::centipoise;

  WellSpec prod;
  prod.name = "P1";
  prod.cell = m.grid.cell(nx - 1, ny - 1);
  prod.kind = WellKind::Producer;
  prod.r_w = 0.1;
  prod.wi = peaceman_well_index(m.grid, prod.cell, prod.r_w);
  WellSpec inj;
  inj.name = "I1";
  inj.cell = m.grid.cell(0, 0);
  inj.kind = WellKind::Injector;
  inj.r_w = 0.1;
  inj.wi = peaceman_well_index(m.grid, inj.cell, inj.r_w);
  m.wells = {prod, inj};
  return m;
}

inline Schedule constant_schedule(double horizon_days, double prod_psi,
                                  double inj_psi) {
  Schedule s;
  s.horizon = horizon_days * units::day;
  s.control_times = {s.horizon};
  s.bhp = {{prod_psi * units::psi, inj_psi * units::psi}};
  return s;
}

inline Schedule stepped_schedule(double horizon_days,
                                 std::vector<double> prod_psi,
                                 std::vector<double> inj_psi) {
  Schedule s;
  s.horizon = horizon_days * units::day;
  const std::size_t np = prod_psi.size();
  for (std::size_t k = 0; k < np; ++k) {
    s.control_times.push_back(horizon_days * units::day *
                              static_cast<double>(k + 1) /
                              static_cast<double>(np));
    s.bhp.push_back({prod_psi[k] * units::psi, inj_psi[k] * units::psi});
  }
  return s;
}

inline State random_interior_state(const Grid& grid, Rng& rng,
                                   double p_lo = 1.9e7, double p_hi = 2.3e7,
                                   double s_lo = 0.05, double s_hi = 0.95) {
  State x;
  x.values.resize(grid.num_dofs());
  for (int c = 0; c < grid.num_cells(); ++c) {
    x.values[2 * c] = rng.uniform(p_lo, p_hi);
    x.values[2 * c + 1] = rng.uniform(s_lo, s_hi);
  }
  return x;
}

}  // namespace emlab::testing
