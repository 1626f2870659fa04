#include "emlab/rom.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

namespace emlab::rom {

namespace {

Eigen::MatrixXd leading_left_vectors(const Eigen::MatrixXd& block, int count,
                                     Eigen::VectorXd* singular_values) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(block, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (count > sv.size())
    throw std::domain_error("requested POD rank exceeds the snapshot count");
  const double floor = sv.size() ? sv[0] * 1.0e-12 : 0.0;
  if (sv.size() == 0 || sv[0] <= 0.0 || sv[count - 1] <= floor)
    throw std::domain_error("requested POD rank exceeds the numerical rank");
  if (singular_values) *singular_values = sv;
  return svd.matrixU().leftCols(count);
}

}  // namespace

PodBasis build_pod_basis(const std::vector<const HfmTrajectory*>& runs,
                         int num_pressure_modes, int num_saturation_modes,
                         double pressure_scale) {
  if (runs.empty()) throw std::invalid_argument("no snapshot runs supplied");
  if (num_pressure_modes < 1 || num_saturation_modes < 1)
    throw std::invalid_argument("mode counts must be positive");
  if (!(pressure_scale > 0.0))
    throw std::invalid_argument("pressure scale must be positive");

  std::size_t total = 0;
  for (const auto* run : runs) total += run->states.size();
  const Eigen::Index n = runs.front()->states.front().values.size();

  Eigen::MatrixXd snaps(n, static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (const auto* run : runs)
    for (const auto& st : run->states) snaps.col(col++) = st.values;

  PodBasis basis;
  basis.x_ref = snaps.rowwise().mean();
  basis.row_scale = Eigen::VectorXd::Ones(n);
  for (Eigen::Index r = 0; r < n; r += 2) basis.row_scale[r] = pressure_scale;
  basis.num_pressure_modes = num_pressure_modes;
  basis.num_saturation_modes = num_saturation_modes;

  Eigen::MatrixXd centered =
      ((snaps.colwise() - basis.x_ref).array().colwise() /
       basis.row_scale.array())
          .matrix();

  const Eigen::Index nc = n / 2;
  Eigen::MatrixXd pressure_block(nc, centered.cols());
  Eigen::MatrixXd saturation_block(nc, centered.cols());
  for (Eigen::Index c = 0; c < nc; ++c) {
    pressure_block.row(c) = centered.row(2 * c);
    saturation_block.row(c) = centered.row(2 * c + 1);
  }

  const Eigen::MatrixXd up = leading_left_vectors(
      pressure_block, num_pressure_modes, &basis.pressure_singular_values);
  const Eigen::MatrixXd us = leading_left_vectors(
      saturation_block, num_saturation_modes, &basis.saturation_singular_values);

  basis.phi = Eigen::MatrixXd::Zero(n, num_pressure_modes + num_saturation_modes);
  for (Eigen::Index c = 0; c < nc; ++c) {
    basis.phi.block(2 * c, 0, 1, num_pressure_modes) = up.row(c);
    basis.phi.block(2 * c + 1, num_pressure_modes, 1, num_saturation_modes) =
        us.row(c);
  }
  return basis;
}

TpwlOperators precompute_operators(const HfmTrajectory& primary_run,
                                   const Schedule& training_schedule,
                                   const PodBasis& basis,
                                   const hfm::Model& model) {
  const int n_steps = primary_run.num_steps();
  if (static_cast<int>(primary_run.jac_records.size()) != n_steps)
    throw std::invalid_argument(
        "primary run must carry Jacobian records for every step");

  TpwlOperators ops;
  ops.pore_volume = model.grid.pore_volume();
  ops.records.reserve(static_cast<std::size_t>(n_steps));

  // Folding the state scaling into the projected basis once keeps every
  // reduced operator in the scaled space.
  const Eigen::MatrixXd phi_scaled = basis.row_scale.asDiagonal() * basis.phi;

  for (int i = 0; i < n_steps; ++i) {
    const auto& jac = primary_run.jac_records[static_cast<std::size_t>(i)];
    TpwlRecord rec;
    const Eigen::MatrixXd j_phi = jac.j * phi_scaled;
    const Eigen::MatrixXd b_phi = jac.b * phi_scaled;
    Eigen::MatrixXd jr = j_phi.transpose() * j_phi;
    rec.jr = 0.5 * (jr + jr.transpose());
    rec.br = j_phi.transpose() * b_phi;
    rec.cr = j_phi.transpose() * jac.c;
    rec.z_i =
        basis.project(primary_run.states[static_cast<std::size_t>(i + 1)].values);
    rec.z_im1 =
        basis.project(primary_run.states[static_cast<std::size_t>(i)].values);
    rec.dt = primary_run.dts[static_cast<std::size_t>(i)];
    rec.t = primary_run.times[static_cast<std::size_t>(i)];
    rec.u_ip1 = training_schedule.controls_at(rec.t - 0.5 * rec.dt);
    rec.pvi_end = primary_run.pvi[static_cast<std::size_t>(i)];
    rec.pvi_key = i == 0 ? 0.0 : primary_run.pvi[static_cast<std::size_t>(i - 1)];

    for (const auto& well : model.wells) {
      const int d = well.cell;
      Eigen::Matrix2d jb, bb;
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          jb(r, c) = jac.j.coeff(2 * d + r, 2 * d + c);
          bb(r, c) = jac.b.coeff(2 * d + r, 2 * d + c);
        }
      rec.j_blocks.push_back(jb);
      rec.b_blocks.push_back(bb);
      Eigen::Matrix<double, 2, Eigen::Dynamic> cc(2, jac.c.cols());
      for (int r = 0; r < 2; ++r)
        for (Eigen::Index c = 0; c < jac.c.cols(); ++c)
          cc(r, c) = jac.c.coeff(2 * d + r, c);
      rec.c_cols.push_back(cc);
    }

    rec.jr_lu = std::make_shared<Eigen::FullPivLU<Eigen::MatrixXd>>(rec.jr);
    ops.records.push_back(std::move(rec));
  }
  return ops;
}

int select_linearization_point(double pvi_test, const TpwlOperators& ops) {
  if (ops.records.empty())
    throw std::invalid_argument("no linearization records available");
  int best = 0;
  double best_dist = std::abs(ops.records[0].pvi_key - pvi_test);
  for (int i = 1; i < ops.num_steps(); ++i) {
    const double dist =
        std::abs(ops.records[static_cast<std::size_t>(i)].pvi_key - pvi_test);
    if (dist < best_dist) {
      best = i;
      best_dist = dist;
    }
  }
  return best;
}

Eigen::VectorXd tpwl_step(const Eigen::VectorXd& z_prev,
                          const Eigen::VectorXd& u_next,
                          const TpwlOperators& ops, int index) {
  if (index < 0 || index >= ops.num_steps())
    throw std::out_of_range("linearization index out of range");
  const TpwlRecord& rec = ops.records[static_cast<std::size_t>(index)];
  auto lu = rec.jr_lu;
  if (!lu) lu = std::make_shared<Eigen::FullPivLU<Eigen::MatrixXd>>(rec.jr);
  if (!lu->isInvertible())
    throw SingularSystem("singular reduced Jacobian at training step " +
                         std::to_string(index));
  const Eigen::VectorXd rhs =
      rec.br * (z_prev - rec.z_im1) + rec.cr * (u_next - rec.u_ip1);
  return rec.z_i - lu->solve(rhs);
}

RomTrajectory simulate_rom(const Schedule& schedule, const TpwlOperators& ops,
                           const PodBasis& basis,
                           const std::vector<WellSpec>& wells,
                           const hfm::FluidModel& fluid) {
  if (ops.records.empty())
    throw std::invalid_argument("empty TPWL operator set");
  const int n_wells = static_cast<int>(wells.size());

  std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>> rows;
  std::vector<Eigen::Vector2d> offsets;
  rows.reserve(wells.size());
  for (const auto& w : wells) {
    rows.push_back(basis.well_rows(w.cell));
    offsets.emplace_back(basis.x_ref[2 * w.cell], basis.x_ref[2 * w.cell + 1]);
  }

  RomTrajectory traj;
  const int n_steps = ops.num_steps();
  traj.well_states.resize(n_steps, 2 * n_wells);
  traj.qoi.reserve(static_cast<std::size_t>(n_steps));
  traj.steps.reserve(static_cast<std::size_t>(n_steps));

  const double max_key = ops.records.back().pvi_key;
  Eigen::VectorXd z_prev = ops.records.front().z_im1;
  double pvi = 0.0;
  for (int n = 0; n < n_steps; ++n) {
    const TpwlRecord& grid_rec = ops.records[static_cast<std::size_t>(n)];
    const double dt = grid_rec.dt;
    const double t = grid_rec.t;
    const Eigen::VectorXd u = schedule.controls_at(t - 0.5 * dt);

    const double pvi_start = pvi;
    if (pvi_start > max_key * (1.0 + 1.0e-9) + 1.0e-12)
      traj.coverage_exceeded = true;
    const int i = select_linearization_point(pvi_start, ops);
    Eigen::VectorXd z = tpwl_step(z_prev, u, ops, i);

    std::vector<hfm::WellRates> rates(wells.size());
    double inj_rate = 0.0;
    for (int w = 0; w < n_wells; ++w) {
      const Eigen::Vector2d ps = rows[static_cast<std::size_t>(w)] * z +
                                 offsets[static_cast<std::size_t>(w)];
      double s = ps[1];
      if (s < 0.0 || s > 1.0) {
        traj.saturation_clamped = true;
        s = std::clamp(s, 0.0, 1.0);
      }
      traj.well_states(n, 2 * w) = ps[0];
      traj.well_states(n, 2 * w + 1) = s;
      rates[static_cast<std::size_t>(w)] = hfm::well_rates(
          ps[0], s, u[w], wells[static_cast<std::size_t>(w)], fluid);
      if (wells[static_cast<std::size_t>(w)].kind == hfm::WellKind::Injector)
        inj_rate += rates[static_cast<std::size_t>(w)].water;
    }
    pvi += inj_rate * dt / ops.pore_volume;

    RomStepContext ctx;
    ctx.z = std::move(z);
    ctx.z_prev = z_prev;
    ctx.u = u;
    ctx.lin_index = i;
    ctx.dt = dt;
    ctx.t = t;
    ctx.pvi = pvi;
    ctx.pvi_start = pvi_start;
    z_prev = ctx.z;
    traj.steps.push_back(std::move(ctx));
    traj.qoi.push_back(std::move(rates));
  }
  return traj;
}

void save_basis(const std::filesystem::path& base, const PodBasis& basis) {
  io::BlobWriter out(base);
  out.meta() = {{"num_pressure_modes", basis.num_pressure_modes},
                {"num_saturation_modes", basis.num_saturation_modes}};
  out.add("phi", basis.phi);
  out.add("x_ref", Eigen::MatrixXd(basis.x_ref));
  out.add("row_scale", Eigen::MatrixXd(basis.row_scale));
  out.add("pressure_sv", Eigen::MatrixXd(basis.pressure_singular_values));
  out.add("saturation_sv", Eigen::MatrixXd(basis.saturation_singular_values));
  out.finish();
}

PodBasis load_basis(const std::filesystem::path& base) {
  io::BlobReader in(base);
  PodBasis basis;
  basis.num_pressure_modes = in.meta().at("num_pressure_modes");
  basis.num_saturation_modes = in.meta().at("num_saturation_modes");
  basis.phi = in.matrix("phi");
  basis.x_ref = in.matrix("x_ref");
  basis.row_scale = in.matrix("row_scale");
  basis.pressure_singular_values = in.matrix("pressure_sv");
  basis.saturation_singular_values = in.matrix("saturation_sv");
  return basis;
}

void save_operators(const std::filesystem::path& base,
                    const TpwlOperators& ops) {
  io::BlobWriter out(base);
  const int n = ops.num_steps();
  const int n_wells =
      n > 0 ? static_cast<int>(ops.records.front().j_blocks.size()) : 0;
  out.meta() = {{"num_steps", n},
                {"num_wells", n_wells},
                {"pore_volume", ops.pore_volume}};
  Eigen::MatrixXd scalars(n, 4);
  for (int i = 0; i < n; ++i) {
    const TpwlRecord& rec = ops.records[static_cast<std::size_t>(i)];
    const std::string p = "r" + std::to_string(i);
    out.add(p + ".jr", rec.jr);
    out.add(p + ".br", rec.br);
    out.add(p + ".cr", rec.cr);
    out.add(p + ".z_i", Eigen::MatrixXd(rec.z_i));
    out.add(p + ".z_im1", Eigen::MatrixXd(rec.z_im1));
    out.add(p + ".u_ip1", Eigen::MatrixXd(rec.u_ip1));
    scalars.row(i) << rec.pvi_key, rec.pvi_end, rec.dt, rec.t;
    if (n_wells > 0) {
      Eigen::MatrixXd blocks(2 * n_wells, 2 + 2 + rec.c_cols.front().cols());
      for (int w = 0; w < n_wells; ++w) {
        blocks.block<2, 2>(2 * w, 0) = rec.j_blocks[static_cast<std::size_t>(w)];
        blocks.block<2, 2>(2 * w, 2) = rec.b_blocks[static_cast<std::size_t>(w)];
        blocks.block(2 * w, 4, 2, rec.c_cols.front().cols()) =
            rec.c_cols[static_cast<std::size_t>(w)];
      }
      out.add(p + ".blocks", blocks);
    }
  }
  out.add("scalars", scalars);
  out.finish();
}

TpwlOperators load_operators(const std::filesystem::path& base) {
  io::BlobReader in(base);
  TpwlOperators ops;
  const int n = in.meta().at("num_steps");
  const int n_wells = in.meta().at("num_wells");
  ops.pore_volume = in.meta().at("pore_volume");
  const Eigen::MatrixXd scalars = in.matrix("scalars");
  ops.records.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::string p = "r" + std::to_string(i);
    TpwlRecord rec;
    rec.jr = in.matrix(p + ".jr");
    rec.br = in.matrix(p + ".br");
    rec.cr = in.matrix(p + ".cr");
    rec.z_i = in.matrix(p + ".z_i");
    rec.z_im1 = in.matrix(p + ".z_im1");
    rec.u_ip1 = in.matrix(p + ".u_ip1");
    rec.pvi_key = scalars(i, 0);
    rec.pvi_end = scalars(i, 1);
    rec.dt = scalars(i, 2);
    rec.t = scalars(i, 3);
    if (n_wells > 0) {
      const Eigen::MatrixXd blocks = in.matrix(p + ".blocks");
      const Eigen::Index c_cols = blocks.cols() - 4;
      for (int w = 0; w < n_wells; ++w) {
        rec.j_blocks.push_back(blocks.block<2, 2>(2 * w, 0));
        rec.b_blocks.push_back(blocks.block<2, 2>(2 * w, 2));
        rec.c_cols.emplace_back(blocks.block(2 * w, 4, 2, c_cols));
      }
    }
    rec.jr_lu = std::make_shared<Eigen::FullPivLU<Eigen::MatrixXd>>(rec.jr);
    ops.records.push_back(std::move(rec));
  }
  return ops;
}

}  // namespace emlab::rom
