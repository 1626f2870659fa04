#include "emlab/features.hpp"

#include <cmath>
#include <stdexcept>

namespace emlab::feat {

namespace {

// Physical well-block (p, S) reconstruction, unclamped.
Eigen::Vector2d block_state(const rom::PodBasis& basis, int cell,
                            const Eigen::VectorXd& z) {
  Eigen::Vector2d ps;
  ps[0] = basis.x_ref[2 * cell] +
          basis.row_scale[2 * cell] * basis.phi.row(2 * cell).dot(z);
  ps[1] = basis.x_ref[2 * cell + 1] +
          basis.row_scale[2 * cell + 1] * basis.phi.row(2 * cell + 1).dot(z);
  return ps;
}

}  // namespace

std::vector<std::string> FeatureCatalog::augmented_names() const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(augmented_size()));
  for (int lag = 0; lag <= memory; ++lag)
    for (const auto& n : names)
      out.push_back(lag == 0 ? n : n + "_lag" + std::to_string(lag));
  return out;
}

FeatureCatalog make_catalog(const std::vector<hfm::WellSpec>& wells,
                            int memory) {
  if (memory < 0) throw std::invalid_argument("memory depth must be >= 0");
  FeatureCatalog cat;
  cat.memory = memory;
  auto& n = cat.names;
  auto per_well = [&](const std::string& stem) {
    for (const auto& w : wells) n.push_back(stem + "[" + w.name + "]");
  };
  auto per_well_ps = [&](const std::string& stem) {
    for (const auto& w : wells) {
      n.push_back("p_" + stem + "[" + w.name + "]");
      n.push_back("s_" + stem + "[" + w.name + "]");
    }
  };
  per_well_ps("n");
  per_well_ps("i");
  per_well_ps("nm1");
  per_well_ps("im1");
  n.insert(n.end(), {"dp_dt_n", "ds_dt_n", "dp_dt_i", "ds_dt_i"});
  per_well("bhp_n");
  per_well("bhp_i");
  n.insert(n.end(), {"j_block_00", "j_block_01", "j_block_10", "j_block_11"});
  n.insert(n.end(), {"b_block_00", "b_block_01", "b_block_10", "b_block_11"});
  n.insert(n.end(), {"c_col_p", "c_col_s"});
  n.insert(n.end(), {"z_cosine", "dt_n", "dt_i", "pvi_n", "pvi_i", "t_n", "t_i",
                     "s_diff_n_i", "s_diff_nm1_im1", "pvi_diff"});
  return cat;
}

Eigen::RowVectorXd extract_features(const rom::RomStepContext& ctx,
                                    const rom::TpwlOperators& ops,
                                    const rom::PodBasis& basis,
                                    const std::vector<hfm::WellSpec>& wells,
                                    int target_well, bool* cosine_flagged) {
  const int nw = static_cast<int>(wells.size());
  const auto& rec = ops.records[static_cast<std::size_t>(ctx.lin_index)];
  const int d = wells[static_cast<std::size_t>(target_well)].cell;

  Eigen::RowVectorXd f(10 * nw + 24);
  int k = 0;
  auto states_for = [&](const Eigen::VectorXd& z) {
    for (int w = 0; w < nw; ++w) {
      const Eigen::Vector2d ps =
          block_state(basis, wells[static_cast<std::size_t>(w)].cell, z);
      f[k++] = ps[0];
      f[k++] = ps[1];
    }
  };
  states_for(ctx.z);
  states_for(rec.z_i);
  states_for(ctx.z_prev);
  states_for(rec.z_im1);

  const Eigen::Vector2d now = block_state(basis, d, ctx.z);
  const Eigen::Vector2d prev = block_state(basis, d, ctx.z_prev);
  const Eigen::Vector2d tr_now = block_state(basis, d, rec.z_i);
  const Eigen::Vector2d tr_prev = block_state(basis, d, rec.z_im1);
  f[k++] = (now[0] - prev[0]) / ctx.dt;
  f[k++] = (now[1] - prev[1]) / ctx.dt;
  f[k++] = (tr_now[0] - tr_prev[0]) / rec.dt;
  f[k++] = (tr_now[1] - tr_prev[1]) / rec.dt;

  for (int w = 0; w < nw; ++w) f[k++] = ctx.u[w];
  for (int w = 0; w < nw; ++w) f[k++] = rec.u_ip1[w];

  const Eigen::Matrix2d& jb = rec.j_blocks[static_cast<std::size_t>(target_well)];
  const Eigen::Matrix2d& bb = rec.b_blocks[static_cast<std::size_t>(target_well)];
  f[k++] = jb(0, 0);
  f[k++] = jb(0, 1);
  f[k++] = jb(1, 0);
  f[k++] = jb(1, 1);
  f[k++] = bb(0, 0);
  f[k++] = bb(0, 1);
  f[k++] = bb(1, 0);
  f[k++] = bb(1, 1);
  f[k++] = rec.c_cols[static_cast<std::size_t>(target_well)](0, target_well);
  f[k++] = rec.c_cols[static_cast<std::size_t>(target_well)](1, target_well);

  const double nz = ctx.z.norm();
  const double ni = rec.z_i.norm();
  if (nz > 0.0 && ni > 0.0) {
    f[k++] = ctx.z.dot(rec.z_i) / (nz * ni);
  } else {
    f[k++] = 0.0;
    if (cosine_flagged) *cosine_flagged = true;
  }

  f[k++] = ctx.dt;
  f[k++] = rec.dt;
  f[k++] = ctx.pvi;
  f[k++] = rec.pvi_end;
  f[k++] = ctx.t;
  f[k++] = rec.t;
  f[k++] = now[1] - tr_now[1];
  f[k++] = prev[1] - tr_prev[1];
  f[k++] = ctx.pvi - rec.pvi_end;
  if (k != f.size()) throw std::logic_error("feature catalog size mismatch");
  return f;
}

Eigen::MatrixXd feature_matrix(const rom::RomTrajectory& rom,
                               const rom::TpwlOperators& ops,
                               const rom::PodBasis& basis,
                               const std::vector<hfm::WellSpec>& wells,
                               int target_well) {
  const int n = rom.num_steps();
  Eigen::MatrixXd x(n, 10 * static_cast<int>(wells.size()) + 24);
  for (int row = 0; row < n; ++row)
    x.row(row) = extract_features(rom.steps[static_cast<std::size_t>(row)], ops,
                                  basis, wells, target_well);
  return x;
}

MemoryAugmented apply_memory(const Eigen::MatrixXd& rows, int tau) {
  if (tau < 0) throw std::invalid_argument("memory depth must be >= 0");
  const Eigen::Index n = rows.rows();
  const Eigen::Index f = rows.cols();
  MemoryAugmented out;
  out.rows.resize(n, (1 + tau) * f);
  out.padded.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int lag = 0; lag <= tau; ++lag) {
      Eigen::Index src = r - lag;
      if (src < 0) {
        src = 0;
        out.padded[static_cast<std::size_t>(r)] = true;
      }
      out.rows.block(r, lag * f, 1, f) = rows.row(src);
    }
  }
  return out;
}

std::vector<int> prune_correlated(const Eigen::MatrixXd& x, double rho_max) {
  if (x.rows() < 2)
    throw std::invalid_argument("pruning needs at least two rows");
  if (!(rho_max > 0.0 && rho_max <= 1.0))
    throw std::invalid_argument("rho_max must lie in (0, 1]");
  const Eigen::Index n = x.rows();
  const Eigen::Index f = x.cols();

  Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::VectorXd norms(f);
  for (Eigen::Index j = 0; j < f; ++j) norms[j] = centered.col(j).norm();
  const double tiny = 1.0e-12 * std::sqrt(static_cast<double>(n));

  std::vector<int> retained;
  for (Eigen::Index j = 0; j < f; ++j) {
    if (norms[j] <= tiny * std::max(1.0, x.col(j).cwiseAbs().maxCoeff()))
      continue;  // constant column
    bool keep = true;
    for (int r : retained) {
      const double rho =
          centered.col(j).dot(centered.col(r)) / (norms[j] * norms[r]);
      if (std::abs(rho) > rho_max) {
        keep = false;
        break;
      }
    }
    if (keep) retained.push_back(static_cast<int>(j));
  }
  if (retained.empty()) throw std::domain_error("pruning removed every feature");
  return retained;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& x,
                               const std::vector<int>& retained) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(retained.size()));
  for (std::size_t j = 0; j < retained.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = x.col(retained[j]);
  return out;
}

std::vector<std::string> classification_feature_names(
    const std::vector<hfm::WellSpec>& wells) {
  std::vector<std::string> names{"bhp_dev_rms", "bhp_dev_mean"};
  for (const auto& w : wells)
    if (w.kind == hfm::WellKind::Injector)
      names.push_back("pi_dp_rms[" + w.name + "]");
  names.push_back("tr_dp_rms");
  for (const auto& w : wells)
    if (w.kind == hfm::WellKind::Injector)
      names.push_back("pi_dp_mean[" + w.name + "]");
  names.push_back("tr_dp_mean");
  return names;
}

Eigen::MatrixXd classification_features(const rom::RomTrajectory& rom,
                                        const rom::TpwlOperators& ops,
                                        const rom::PodBasis& basis,
                                        const std::vector<hfm::WellSpec>& wells,
                                        int producer_well) {
  if (wells[static_cast<std::size_t>(producer_well)].kind !=
      hfm::WellKind::Producer)
    throw std::invalid_argument("classification features target producers");
  std::vector<int> injectors;
  for (int w = 0; w < static_cast<int>(wells.size()); ++w)
    if (wells[static_cast<std::size_t>(w)].kind == hfm::WellKind::Injector)
      injectors.push_back(w);

  const int n = rom.num_steps();
  const int ni = static_cast<int>(injectors.size());
  const int d = wells[static_cast<std::size_t>(producer_well)].cell;
  Eigen::MatrixXd out(n, 4 + 2 * ni);

  // Pressure rows scaled to physical units; these features use the raw
  // projection (no reference offset), so trained and test reduced states
  // difference out cleanly.
  const Eigen::RowVectorXd prod_row =
      basis.row_scale[2 * d] * basis.phi.row(2 * d);
  std::vector<Eigen::RowVectorXd> inj_rows;
  for (int w : injectors) {
    const int c = wells[static_cast<std::size_t>(w)].cell;
    inj_rows.push_back(basis.row_scale[2 * c] * basis.phi.row(2 * c));
  }

  double sq_bhp = 0.0, sum_bhp = 0.0, sq_tr = 0.0, sum_tr = 0.0;
  Eigen::VectorXd sq_pi = Eigen::VectorXd::Zero(ni);
  Eigen::VectorXd sum_pi = Eigen::VectorXd::Zero(ni);

  for (int step = 0; step < n; ++step) {
    const auto& ctx = rom.steps[static_cast<std::size_t>(step)];
    const auto& rec = ops.records[static_cast<std::size_t>(step)];
    const double bhp_dev = ctx.u[producer_well] - rec.u_ip1[producer_well];
    sq_bhp += bhp_dev * bhp_dev;
    sum_bhp += bhp_dev;
    const double tr_dp = prod_row.dot(ctx.z - rec.z_i);
    sq_tr += tr_dp * tr_dp;
    sum_tr += tr_dp;
    for (int q = 0; q < ni; ++q) {
      const double dp = prod_row.dot(ctx.z) -
                        inj_rows[static_cast<std::size_t>(q)].dot(ctx.z);
      sq_pi[q] += dp * dp;
      sum_pi[q] += dp;
    }

    const double inv = 1.0 / static_cast<double>(step + 1);
    int k = 0;
    out(step, k++) = std::sqrt(sq_bhp);
    out(step, k++) = sum_bhp * inv;
    for (int q = 0; q < ni; ++q) out(step, k++) = std::sqrt(sq_pi[q]);
    out(step, k++) = std::sqrt(sq_tr);
    for (int q = 0; q < ni; ++q) out(step, k++) = sum_pi[q] * inv;
    out(step, k++) = sum_tr * inv;
  }
  return out;
}

}  // namespace emlab::feat
