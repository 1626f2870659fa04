#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <vector>

#include "emlab/hfm.hpp"
#include "emlab/io.hpp"

namespace emlab::rom {

using hfm::HfmTrajectory;
using hfm::Schedule;
using hfm::State;
using hfm::WellSpec;

// Block-structured POD basis: pressure columns act on pressure rows only and
// saturation columns on saturation rows, so Phi'Phi = I follows from the two
// block SVDs. The basis lives in a row-scaled space (pressure rows divided by
// pressure_scale) to keep reduced operators well conditioned; reconstruction
// maps back to physical units.
struct PodBasis {
  Eigen::MatrixXd phi;        // 2Nc x (lp + ls), orthonormal in scaled space
  Eigen::VectorXd x_ref;      // physical snapshot mean
  Eigen::VectorXd row_scale;  // pressure_scale on pressure rows, 1 elsewhere
  int num_pressure_modes = 0;
  int num_saturation_modes = 0;
  Eigen::VectorXd pressure_singular_values;
  Eigen::VectorXd saturation_singular_values;

  int rank() const { return num_pressure_modes + num_saturation_modes; }

  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    return phi.transpose() * ((x - x_ref).cwiseQuotient(row_scale));
  }
  Eigen::VectorXd reconstruct(const Eigen::VectorXd& z) const {
    return x_ref + row_scale.cwiseProduct(phi * z);
  }
  // Physical reconstruction rows for well block d: [pressure; saturation].
  Eigen::Matrix<double, 2, Eigen::Dynamic> well_rows(int cell) const {
    Eigen::Matrix<double, 2, Eigen::Dynamic> rows(2, phi.cols());
    rows.row(0) = row_scale[2 * cell] * phi.row(2 * cell);
    rows.row(1) = row_scale[2 * cell + 1] * phi.row(2 * cell + 1);
    return rows;
  }
};

// Leading left singular vectors of the centered, scaled snapshot blocks.
// Snapshots are every state (including the initial one) of every run.
PodBasis build_pod_basis(const std::vector<const HfmTrajectory*>& runs,
                         int num_pressure_modes, int num_saturation_modes,
                         double pressure_scale);

// Linearization record for one primary-training step. pvi_key is the PVI the
// training solution had reached when the step began; matching the test
// solution's progress against it makes replaying the training schedule select
// each step's own record.
struct TpwlRecord {
  Eigen::MatrixXd jr;  // (J Phi)' J Phi in the scaled space, symmetrized
  Eigen::MatrixXd br;
  Eigen::MatrixXd cr;
  Eigen::VectorXd z_i;
  Eigen::VectorXd z_im1;
  Eigen::VectorXd u_ip1;  // controls governing the training step
  double pvi_key = 0.0;
  double pvi_end = 0.0;
  double dt = 0.0;
  double t = 0.0;
  // Physical operator samples at the well blocks (feature inputs).
  std::vector<Eigen::Matrix2d> j_blocks;  // per well: P_d J P_d'
  std::vector<Eigen::Matrix2d> b_blocks;
  std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>> c_cols;  // P_d C
  std::shared_ptr<Eigen::FullPivLU<Eigen::MatrixXd>> jr_lu;      // cached
};

struct TpwlOperators {
  std::vector<TpwlRecord> records;
  double pore_volume = 0.0;

  int num_steps() const { return static_cast<int>(records.size()); }
};

TpwlOperators precompute_operators(const HfmTrajectory& primary_run,
                                   const Schedule& training_schedule,
                                   const PodBasis& basis,
                                   const hfm::Model& model);

// argmin_i |pvi_key_i - pvi_test|; ties break toward the earlier record.
int select_linearization_point(double pvi_test, const TpwlOperators& ops);

// Solves Jr (z - z_i) + Br (z_prev - z_{i-1}) + Cr (u - u_{i+1}) = 0.
Eigen::VectorXd tpwl_step(const Eigen::VectorXd& z_prev,
                          const Eigen::VectorXd& u_next, const TpwlOperators& ops,
                          int index);

// Everything feature extraction may consume for one ROM step; a pure function
// of the surrogate simulation.
struct RomStepContext {
  Eigen::VectorXd z;       // reduced state at step n
  Eigen::VectorXd z_prev;  // step n-1
  Eigen::VectorXd u;       // test controls governing step n (all wells)
  int lin_index = 0;       // chosen training record
  double dt = 0.0;
  double t = 0.0;
  double pvi = 0.0;        // test PVI at the end of step n
  double pvi_start = 0.0;  // test PVI when the step began (selection input)
};

struct RomTrajectory {
  std::vector<RomStepContext> steps;
  std::vector<std::vector<hfm::WellRates>> qoi;  // per step, per well
  // Clamped physical well-block states used for the QoI: rows align with
  // steps, columns are (p, S) per well.
  Eigen::MatrixXd well_states;
  bool coverage_exceeded = false;  // test PVI ran past the training range
  bool saturation_clamped = false;

  int num_steps() const { return static_cast<int>(steps.size()); }
};

// Advances the reduced linear system over the training time grid under a test
// schedule; selects linearization points by PVI and evaluates Peaceman QoIs
// from clamped well-block reconstructions.
RomTrajectory simulate_rom(const Schedule& schedule, const TpwlOperators& ops,
                           const PodBasis& basis,
                           const std::vector<WellSpec>& wells,
                           const hfm::FluidModel& fluid);

void save_basis(const std::filesystem::path& base, const PodBasis& basis);
PodBasis load_basis(const std::filesystem::path& base);
void save_operators(const std::filesystem::path& base, const TpwlOperators& ops);
TpwlOperators load_operators(const std::filesystem::path& base);

}  // namespace emlab::rom
