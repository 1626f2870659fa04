#include "emlab/config.hpp"

#include <cmath>
#include <stdexcept>

namespace emlab::pipe {

namespace {

template <typename T>
void read_if(const io::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<WellPlacement> default_wells(int nx, int ny) {
  // Three producers along one flank, three injectors along the other.
  auto at = [&](double fx, double fy) {
    return std::pair<int, int>{static_cast<int>(std::round(fx * (nx - 1))),
                               static_cast<int>(std::round(fy * (ny - 1)))};
  };
  std::vector<WellPlacement> wells;
  const std::vector<std::pair<double, double>> prod{{0.08, 0.08},
                                                    {0.5, 0.04},
                                                    {0.92, 0.12}};
  const std::vector<std::pair<double, double>> inj{{0.1, 0.9},
                                                   {0.54, 0.96},
                                                   {0.92, 0.88}};
  for (std::size_t k = 0; k < prod.size(); ++k) {
    const auto [i, j] = at(prod[k].first, prod[k].second);
    wells.push_back({"P" + std::to_string(k + 1), i, j, false, 0.1});
  }
  for (std::size_t k = 0; k < inj.size(); ++k) {
    const auto [i, j] = at(inj[k].first, inj[k].second);
    wells.push_back({"I" + std::to_string(k + 1), i, j, true, 0.1});
  }
  return wells;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const io::json& j) {
  ExperimentConfig c;
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    read_if(g, "nx", c.nx);
    read_if(g, "ny", c.ny);
    read_if(g, "dx_m", c.dx_m);
    read_if(g, "dy_m", c.dy_m);
    read_if(g, "dz_m", c.dz_m);
    read_if(g, "porosity", c.porosity);
    if (g.contains("permeability")) {
      const auto& p = g.at("permeability");
      read_if(p, "mean_md", c.perm_mean_md);
      read_if(p, "log_sigma", c.perm_log_sigma);
      read_if(p, "corr_cells", c.perm_corr_cells);
    }
  }
  if (j.contains("fluid")) {
    const auto& f = j.at("fluid");
    read_if(f, "mu_o_cp", c.mu_o_cp);
    read_if(f, "mu_w_cp", c.mu_w_cp);
    read_if(f, "krw_exponent", c.krw_exponent);
    read_if(f, "kro_exponent", c.kro_exponent);
  }
  if (j.contains("wells")) {
    for (const auto& w : j.at("wells")) {
      WellPlacement wp;
      wp.name = w.at("name");
      wp.i = w.at("i");
      wp.j = w.at("j");
      wp.injector = w.at("kind") == "injector";
      read_if(w, "rw_m", wp.r_w);
      c.wells.push_back(wp);
    }
  }
  if (j.contains("init")) {
    read_if(j.at("init"), "pressure_psi", c.init_pressure_psi);
    read_if(j.at("init"), "water_saturation", c.init_saturation);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    read_if(s, "horizon_days", c.horizon_days);
    read_if(s, "training_period_days", c.training_period_days);
    read_if(s, "test_period_days", c.test_period_days);
    read_if(s, "producer_bhp_psi", c.producer_bhp_psi);
    read_if(s, "injector_bhp_psi", c.injector_bhp_psi);
    read_if(s, "training_amplitude", c.training_amplitude);
    read_if(s, "n_tpwl_runs", c.n_tpwl_runs);
  }
  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    read_if(s, "newton_tol_rel", c.newton_tol_rel);
    read_if(s, "max_newton_iters", c.max_newton_iters);
    read_if(s, "dt_init_days", c.dt_init_days);
    read_if(s, "dt_max_days", c.dt_max_days);
    read_if(s, "dt_growth", c.dt_growth);
    read_if(s, "dt_cut", c.dt_cut);
    read_if(s, "max_ds_per_step", c.max_ds_per_step);
    read_if(s, "max_dt_cuts", c.max_dt_cuts);
  }
  if (j.contains("rom")) {
    const auto& r = j.at("rom");
    read_if(r, "num_pressure_modes", c.num_pressure_modes);
    read_if(r, "num_saturation_modes", c.num_saturation_modes);
    read_if(r, "pressure_scale_psi", c.pressure_scale_psi);
  }
  if (j.contains("emml")) {
    const auto& e = j.at("emml");
    read_if(e, "approach", c.emml.approach);
    if (e.contains("regressor"))
      c.emml.regressor = e.at("regressor") == "lasso"
                             ? err::RegressorKind::Lasso
                             : err::RegressorKind::RandomForest;
    if (e.contains("locality")) {
      const std::string l = e.at("locality");
      c.emml.locality = l == "clustering" ? err::LocalityKind::Clustering
                        : l == "none"     ? err::LocalityKind::None
                                          : err::LocalityKind::Classification;
    }
    read_if(e, "tau", c.emml.tau);
    read_if(e, "rho_max", c.emml.rho_max);
    read_if(e, "eps_a", c.emml.eps_a);
    read_if(e, "eps_c", c.emml.eps_c);
    read_if(e, "min_region_samples", c.emml.min_region_samples);
    if (e.contains("rf")) {
      const auto& rf = e.at("rf");
      read_if(rf, "n_trees", c.emml.forest.n_trees);
      read_if(rf, "m_try", c.emml.forest.m_try);
      read_if(rf, "min_leaf", c.emml.forest.min_leaf);
      if (rf.contains("tune_min_leaf")) {
        for (int leaf : rf.at("tune_min_leaf").get<std::vector<int>>()) {
          learn::ForestOptions o = c.emml.forest;
          o.min_leaf = leaf;
          c.emml.tuning_grid.push_back(o);
        }
      }
    }
    if (e.contains("lasso")) {
      const auto& ls = e.at("lasso");
      read_if(ls, "k_folds", c.emml.lasso_folds);
      read_if(ls, "n_lambdas", c.emml.lasso_grid_size);
      read_if(ls, "lambda_min_ratio", c.emml.lasso_min_ratio);
    }
    if (e.contains("cluster_k_range"))
      c.emml.cluster_k_range = e.at("cluster_k_range").get<std::vector<int>>();
    read_if(e, "pca_variance", c.emml.pca_variance);
  }
  if (j.contains("experiment")) {
    const auto& x = j.at("experiment");
    read_if(x, "n_bhp", c.n_bhp);
    read_if(x, "n_train", c.n_train);
    read_if(x, "n_romes", c.n_romes);
    read_if(x, "perturb_amplitude", c.perturb_amplitude);
    read_if(x, "workers", c.workers);
    read_if(x, "master_seed", c.master_seed);
  }
  if (c.wells.empty()) c.wells = default_wells(c.nx, c.ny);
  if (c.n_train >= c.n_bhp)
    throw std::invalid_argument("n_train must be smaller than n_bhp");
  if (c.n_romes > c.n_bhp - c.n_train)
    throw std::invalid_argument("n_romes must fit inside the test set");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_json(io::read_json_file(path));
}

io::json ExperimentConfig::to_json() const {
  io::json wells_json = io::json::array();
  for (const auto& w : wells)
    wells_json.push_back({{"name", w.name},
                          {"i", w.i},
                          {"j", w.j},
                          {"kind", w.injector ? "injector" : "producer"},
                          {"rw_m", w.r_w}});
  io::json tune = io::json::array();
  for (const auto& o : emml.tuning_grid) tune.push_back(o.min_leaf);
  return io::json{
      {"grid",
       {{"nx", nx},
        {"ny", ny},
        {"dx_m", dx_m},
        {"dy_m", dy_m},
        {"dz_m", dz_m},
        {"porosity", porosity},
        {"permeability",
         {{"mean_md", perm_mean_md},
          {"log_sigma", perm_log_sigma},
          {"corr_cells", perm_corr_cells}}}}},
      {"fluid",
       {{"mu_o_cp", mu_o_cp},
        {"mu_w_cp", mu_w_cp},
        {"krw_exponent", krw_exponent},
        {"kro_exponent", kro_exponent}}},
      {"wells", wells_json},
      {"init",
       {{"pressure_psi", init_pressure_psi},
        {"water_saturation", init_saturation}}},
      {"schedule",
       {{"horizon_days", horizon_days},
        {"training_period_days", training_period_days},
        {"test_period_days", test_period_days},
        {"producer_bhp_psi", producer_bhp_psi},
        {"injector_bhp_psi", injector_bhp_psi},
        {"training_amplitude", training_amplitude},
        {"n_tpwl_runs", n_tpwl_runs}}},
      {"sim",
       {{"newton_tol_rel", newton_tol_rel},
        {"max_newton_iters", max_newton_iters},
        {"dt_init_days", dt_init_days},
        {"dt_max_days", dt_max_days},
        {"dt_growth", dt_growth},
        {"dt_cut", dt_cut},
        {"max_ds_per_step", max_ds_per_step},
        {"max_dt_cuts", max_dt_cuts}}},
      {"rom",
       {{"num_pressure_modes", num_pressure_modes},
        {"num_saturation_modes", num_saturation_modes},
        {"pressure_scale_psi", pressure_scale_psi}}},
      {"emml",
       {{"approach", emml.approach},
        {"regressor",
         emml.regressor == err::RegressorKind::Lasso ? "lasso" : "rf"},
        {"locality", emml.locality == err::LocalityKind::Clustering
                         ? "clustering"
                         : emml.locality == err::LocalityKind::None
                               ? "none"
                               : "classification"},
        {"tau", emml.tau},
        {"rho_max", emml.rho_max},
        {"eps_a", emml.eps_a},
        {"eps_c", emml.eps_c},
        {"min_region_samples", emml.min_region_samples},
        {"rf",
         {{"n_trees", emml.forest.n_trees},
          {"m_try", emml.forest.m_try},
          {"min_leaf", emml.forest.min_leaf},
          {"tune_min_leaf", tune}}},
        {"lasso",
         {{"k_folds", emml.lasso_folds},
          {"n_lambdas", emml.lasso_grid_size},
          {"lambda_min_ratio", emml.lasso_min_ratio}}},
        {"cluster_k_range", emml.cluster_k_range},
        {"pca_variance", emml.pca_variance}}},
      {"experiment",
       {{"n_bhp", n_bhp},
        {"n_train", n_train},
        {"n_romes", n_romes},
        {"perturb_amplitude", perturb_amplitude},
        {"workers", workers},
        {"master_seed", master_seed}}}};
}

std::uint64_t ExperimentConfig::config_hash() const {
  return fnv1a64(to_json().dump());
}

hfm::Model ExperimentConfig::build_model() const {
  hfm::Model m;
  m.grid.nx = nx;
  m.grid.ny = ny;
  m.grid.dx = dx_m;
  m.grid.dy = dy_m;
  m.grid.dz = dz_m;
  m.grid.poro = Eigen::VectorXd::Constant(nx * ny, porosity);
  m.grid.perm = hfm::synthetic_log_normal_perm(
      nx, ny, perm_mean_md * units::millidarcy, perm_log_sigma, perm_corr_cells,
      derive_seed(master_seed, "permeability"));
  m.fluid.mu_o = mu_o_cp * units::centipoise;
  m.fluid.mu_w = mu_w_cp * units::centipoise;
  m.fluid.krw_exponent = krw_exponent;
  m.fluid.kro_exponent = kro_exponent;
  for (const auto& w : wells) {
    hfm::WellSpec spec;
    spec.name = w.name;
    spec.cell = m.grid.cell(w.i, w.j);
    spec.kind = w.injector ? hfm::WellKind::Injector : hfm::WellKind::Producer;
    spec.r_w = w.r_w;
    spec.wi = hfm::peaceman_well_index(m.grid, spec.cell, spec.r_w);
    m.wells.push_back(spec);
  }
  hfm::validate_wells(m.grid, m.wells);
  return m;
}

hfm::State ExperimentConfig::initial_state(const hfm::Grid& grid) const {
  return hfm::uniform_state(grid, init_pressure_psi * units::psi,
                            init_saturation);
}

hfm::SimOptions ExperimentConfig::sim_options() const {
  hfm::SimOptions opts;
  opts.newton.tol_rel = newton_tol_rel;
  opts.newton.max_iter = max_newton_iters;
  opts.dt_init = dt_init_days * units::day;
  opts.dt_max = dt_max_days * units::day;
  opts.dt_growth = dt_growth;
  opts.dt_cut = dt_cut;
  opts.max_ds_per_step = max_ds_per_step;
  opts.max_dt_cuts = max_dt_cuts;
  return opts;
}

double ExperimentConfig::bhp_spread_pa() const {
  return (injector_bhp_psi - producer_bhp_psi) * units::psi;
}

hfm::Schedule ExperimentConfig::tpwl_training_schedule(int run_index) const {
  const double spread = bhp_spread_pa();
  if (!(spread > 0.0))
    throw std::invalid_argument("injector BHP must exceed producer BHP");
  hfm::Schedule s;
  s.horizon = horizon_days * units::day;
  const int periods = std::max(
      1, static_cast<int>(std::round(horizon_days / training_period_days)));
  Rng rng(derive_seed(master_seed, "tpwl-schedule",
                      static_cast<std::uint64_t>(run_index)));
  for (int k = 0; k < periods; ++k) {
    s.control_times.push_back(s.horizon * (k + 1) / periods);
    std::vector<double> row;
    row.reserve(wells.size());
    for (const auto& w : wells) {
      const double base =
          (w.injector ? injector_bhp_psi : producer_bhp_psi) * units::psi;
      row.push_back(base + rng.uniform(-training_amplitude,
                                       training_amplitude) *
                               spread);
    }
    s.bhp.push_back(std::move(row));
  }
  return s;
}

}  // namespace emlab::pipe
