#include "doctest.h"

#include <Eigen/Dense>

#include "emlab/rom.hpp"
#include "test_support.hpp"

using namespace emlab;
using namespace emlab::rom;
using emlab::testing::stepped_schedule;
using emlab::testing::tiny_model;

namespace {

struct TrainedRom {
  hfm::Model model;
  hfm::Schedule schedule;
  hfm::HfmTrajectory run;
  PodBasis basis;
  TpwlOperators ops;
};

// One small training pipeline reused across the ROM tests.
const TrainedRom& trained_rom() {
  static const TrainedRom rig = [] {
    TrainedRom r;
    r.model = tiny_model(6, 6);
    r.schedule = stepped_schedule(300.0, {2700.0, 2760.0, 2680.0},
                                  {3300.0, 3240.0, 3330.0});
    hfm::SimOptions opts;
    opts.store_jacobians = true;
    const hfm::State init = hfm::uniform_state(r.model.grid, 2.0e7, 0.0);
    r.run = hfm::simulate_hfm(r.model, r.schedule, init, opts);
    r.basis = build_pod_basis({&r.run}, 10, 14, 1.0e7);
    r.ops = precompute_operators(r.run, r.schedule, r.basis, r.model);
    return r;
  }();
  return rig;
}

}  // namespace

TEST_CASE("pod basis is orthonormal and block structured") {
  const auto& rig = trained_rom();
  const Eigen::MatrixXd gram =
      rig.basis.phi.transpose() * rig.basis.phi -
      Eigen::MatrixXd::Identity(rig.basis.rank(), rig.basis.rank());
  CHECK(gram.cwiseAbs().maxCoeff() < 1e-10);

  // Pressure columns vanish on saturation rows and vice versa.
  for (int c = 0; c < rig.model.grid.num_cells(); ++c) {
    for (int k = 0; k < rig.basis.num_pressure_modes; ++k)
      CHECK(rig.basis.phi(2 * c + 1, k) == 0.0);
    for (int k = rig.basis.num_pressure_modes; k < rig.basis.rank(); ++k)
      CHECK(rig.basis.phi(2 * c, k) == 0.0);
  }
}

TEST_CASE("identical snapshots give a rank error") {
  hfm::Model m = tiny_model(3, 3);
  hfm::HfmTrajectory run;
  for (int k = 0; k < 5; ++k)
    run.states.push_back(hfm::uniform_state(m.grid, 2.0e7, 0.2));
  CHECK_THROWS_AS(build_pod_basis({&run}, 2, 2, 1.0e7), std::domain_error);
}

TEST_CASE("full-rank pod reconstructs every snapshot") {
  hfm::Model m = tiny_model(3, 3);
  Rng rng(derive_seed(11, "pod-full"));
  hfm::HfmTrajectory run;
  for (int k = 0; k < 6; ++k)
    run.states.push_back(emlab::testing::random_interior_state(m.grid, rng));
  // Six snapshots span a five-dimensional centered space per block.
  const PodBasis basis = build_pod_basis({&run}, 5, 5, 1.0e7);
  for (const auto& st : run.states) {
    const Eigen::VectorXd rec = basis.reconstruct(basis.project(st.values));
    const double rel = (rec - st.values).norm() / st.values.norm();
    CHECK(rel < 1e-10);
  }
}

TEST_CASE("singular values match the covariance eigenvalue oracle") {
  hfm::Model m = tiny_model(4, 3);
  Rng rng(derive_seed(12, "pod-sv"));
  hfm::HfmTrajectory run;
  for (int k = 0; k < 20; ++k)
    run.states.push_back(emlab::testing::random_interior_state(m.grid, rng));
  const PodBasis basis = build_pod_basis({&run}, 6, 6, 1.0e7);

  // Oracle: eigenvalues of the centered scaled pressure-block Gram matrix.
  Eigen::MatrixXd snaps(m.grid.num_cells(), 20);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m.grid.num_dofs());
  for (const auto& st : run.states) mean += st.values;
  mean /= 20.0;
  for (int k = 0; k < 20; ++k)
    for (int c = 0; c < m.grid.num_cells(); ++c)
      snaps(c, k) = (run.states[static_cast<std::size_t>(k)].values[2 * c] -
                     mean[2 * c]) /
                    1.0e7;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(snaps * snaps.transpose());
  Eigen::VectorXd lambda = eig.eigenvalues().reverse();
  for (int k = 0; k < 6; ++k) {
    const double sv = basis.pressure_singular_values[k];
    CHECK(sv * sv == doctest::Approx(lambda[k]).epsilon(1e-8).scale(lambda[0]));
  }
}

TEST_CASE("reduced operators satisfy their algebraic identities") {
  const auto& rig = trained_rom();
  REQUIRE(rig.ops.num_steps() == rig.run.num_steps());

  SUBCASE("jr is symmetric") {
    for (const auto& rec : rig.ops.records) {
      const double scale = rec.jr.cwiseAbs().maxCoeff();
      CHECK((rec.jr - rec.jr.transpose()).cwiseAbs().maxCoeff() < 1e-10 * scale);
    }
  }

  SUBCASE("jr entries equal the dense triple product") {
    const int i = rig.ops.num_steps() / 2;
    const auto& rec = rig.ops.records[static_cast<std::size_t>(i)];
    const auto& jac = rig.run.jac_records[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd j_dense = Eigen::MatrixXd(jac.j) *
                                    rig.basis.row_scale.asDiagonal() *
                                    rig.basis.phi;
    const Eigen::MatrixXd oracle = j_dense.transpose() * j_dense;
    CHECK(rec.jr(0, 0) ==
          doctest::Approx(oracle(0, 0)).epsilon(1e-10).scale(oracle.norm()));
    CHECK((rec.jr - oracle).norm() < 1e-10 * oracle.norm());
  }

  SUBCASE("sampled well blocks equal dense extraction") {
    const int i = 1;
    const auto& rec = rig.ops.records[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd j_dense =
        Eigen::MatrixXd(rig.run.jac_records[static_cast<std::size_t>(i)].j);
    for (std::size_t w = 0; w < rig.model.wells.size(); ++w) {
      const int d = rig.model.wells[w].cell;
      CHECK(rec.j_blocks[w](0, 0) == j_dense(2 * d, 2 * d));
      CHECK(rec.j_blocks[w](1, 0) == j_dense(2 * d + 1, 2 * d));
      CHECK(rec.j_blocks[w](0, 1) == j_dense(2 * d, 2 * d + 1));
    }
  }

  SUBCASE("pvi keys are nondecreasing") {
    for (int i = 1; i < rig.ops.num_steps(); ++i)
      CHECK(rig.ops.records[static_cast<std::size_t>(i)].pvi_key >=
            rig.ops.records[static_cast<std::size_t>(i - 1)].pvi_key);
  }
}

TEST_CASE("linearization point selection") {
  TpwlOperators ops;
  for (double key : {0.0, 0.1, 0.2, 0.3, 0.4}) {
    TpwlRecord rec;
    rec.pvi_key = key;
    ops.records.push_back(rec);
  }
  CHECK(select_linearization_point(0.3, ops) == 3);
  CHECK(select_linearization_point(-1.0, ops) == 0);
  CHECK(select_linearization_point(999.0, ops) == 4);
  // Equidistant between keys 2 and 3 resolves to the earlier record.
  CHECK(select_linearization_point(0.25, ops) == 2);
}

TEST_CASE("tpwl step replays its training point exactly") {
  const auto& rig = trained_rom();
  const int i = 2;
  const auto& rec = rig.ops.records[static_cast<std::size_t>(i)];
  const Eigen::VectorXd z = tpwl_step(rec.z_im1, rec.u_ip1, rig.ops, i);
  CHECK((z - rec.z_i).norm() < 1e-9 * std::max(rec.z_i.norm(), 1.0));
}

TEST_CASE("control perturbation matches the dense solve oracle") {
  const auto& rig = trained_rom();
  const int i = 3;
  const auto& rec = rig.ops.records[static_cast<std::size_t>(i)];
  Eigen::VectorXd du(rec.u_ip1.size());
  du << 2.0e5, -1.5e5;
  const Eigen::VectorXd z = tpwl_step(rec.z_im1, rec.u_ip1 + du, rig.ops, i);
  const Eigen::VectorXd oracle =
      rec.z_i - rec.jr.fullPivHouseholderQr().solve(rec.cr * du);
  CHECK((z - oracle).norm() < 1e-8 * std::max(oracle.norm(), 1.0));
}

TEST_CASE("singular reduced jacobian is reported") {
  TpwlOperators ops;
  TpwlRecord rec;
  rec.jr = Eigen::MatrixXd::Zero(3, 3);
  rec.br = Eigen::MatrixXd::Zero(3, 3);
  rec.cr = Eigen::MatrixXd::Zero(3, 1);
  rec.z_i = rec.z_im1 = Eigen::VectorXd::Zero(3);
  rec.u_ip1 = Eigen::VectorXd::Zero(1);
  ops.records.push_back(rec);
  CHECK_THROWS_AS(
      tpwl_step(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(1), ops, 0),
      SingularSystem);
}

TEST_CASE("rom replays the primary training schedule") {
  const auto& rig = trained_rom();
  const RomTrajectory rom = simulate_rom(rig.schedule, rig.ops, rig.basis,
                                         rig.model.wells, rig.model.fluid);
  REQUIRE(rom.num_steps() == rig.ops.num_steps());
  double worst = 0.0;
  for (int n = 0; n < rom.num_steps(); ++n) {
    const auto& rec = rig.ops.records[static_cast<std::size_t>(n)];
    const double err =
        (rom.steps[static_cast<std::size_t>(n)].z - rec.z_i).norm() /
        std::max(rec.z_i.norm(), 1.0);
    worst = std::max(worst, err);
    CHECK(rom.steps[static_cast<std::size_t>(n)].lin_index == n);
  }
  CHECK(worst < 1e-8);

  // QoIs equal the training QoIs evaluated through the basis.
  for (int n = 0; n < rom.num_steps(); ++n) {
    const auto& rec = rig.ops.records[static_cast<std::size_t>(n)];
    const Eigen::VectorXd x_rec = rig.basis.reconstruct(rec.z_i);
    for (std::size_t w = 0; w < rig.model.wells.size(); ++w) {
      const auto& well = rig.model.wells[w];
      const auto expect = hfm::well_rates(
          x_rec[2 * well.cell], std::clamp(x_rec[2 * well.cell + 1], 0.0, 1.0),
          rec.u_ip1[static_cast<int>(w)], well, rig.model.fluid);
      CHECK(rom.qoi[static_cast<std::size_t>(n)][w].water ==
            doctest::Approx(expect.water).epsilon(1e-6));
    }
  }
}

TEST_CASE("clamping touches saturations only") {
  const auto& rig = trained_rom();
  const RomTrajectory rom = simulate_rom(rig.schedule, rig.ops, rig.basis,
                                         rig.model.wells, rig.model.fluid);
  for (int n = 0; n < rom.num_steps(); ++n) {
    const Eigen::VectorXd x =
        rig.basis.reconstruct(rom.steps[static_cast<std::size_t>(n)].z);
    for (std::size_t w = 0; w < rig.model.wells.size(); ++w) {
      const int d = rig.model.wells[w].cell;
      // Pressure entries pass through unclamped.
      CHECK(rom.well_states(n, 2 * static_cast<int>(w)) ==
            doctest::Approx(x[2 * d]));
      CHECK(rom.well_states(n, 2 * static_cast<int>(w) + 1) >= 0.0);
      CHECK(rom.well_states(n, 2 * static_cast<int>(w) + 1) <= 1.0);
    }
  }
}

TEST_CASE("rom is affine in the previous state for a fixed record") {
  const auto& rig = trained_rom();
  const int i = 1;
  const auto& rec = rig.ops.records[static_cast<std::size_t>(i)];
  Rng rng(derive_seed(5, "affine"));
  Eigen::VectorXd a(rig.basis.rank()), b(rig.basis.rank());
  for (int k = 0; k < rig.basis.rank(); ++k) {
    a[k] = rng.uniform(-1.0, 1.0);
    b[k] = rng.uniform(-1.0, 1.0);
  }
  const double w = 0.37;
  const Eigen::VectorXd za = tpwl_step(a, rec.u_ip1, rig.ops, i);
  const Eigen::VectorXd zb = tpwl_step(b, rec.u_ip1, rig.ops, i);
  const Eigen::VectorXd zc =
      tpwl_step(w * a + (1.0 - w) * b, rec.u_ip1, rig.ops, i);
  CHECK((zc - (w * za + (1.0 - w) * zb)).norm() <
        1e-9 * std::max(1.0, zc.norm()));
}
