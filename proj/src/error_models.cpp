#include "emlab/error_models.hpp"

#include <cmath>
#include <stdexcept>

namespace emlab::err {

namespace {

constexpr double kTinyRate = 1.0e-30;

bool is_producer(const hfm::WellSpec& w) {
  return w.kind == hfm::WellKind::Producer;
}

}  // namespace

CaseErrors compute_errors(const hfm::HfmTrajectory& hf,
                          const rom::RomTrajectory& ro,
                          const std::vector<hfm::WellSpec>& wells,
                          double eps_a, double eps_c) {
  const int n_steps = ro.num_steps();
  if (hf.num_steps() != n_steps)
    throw std::invalid_argument("paired runs must share the time grid");
  for (int n = 0; n < n_steps; ++n) {
    if (std::abs(hf.dts[static_cast<std::size_t>(n)] -
                 ro.steps[static_cast<std::size_t>(n)].dt) >
        1.0e-9 * hf.dts[static_cast<std::size_t>(n)])
      throw std::invalid_argument("paired runs must share the time grid");
  }

  CaseErrors out(static_cast<std::size_t>(n_steps));
  for (int n = 0; n < n_steps; ++n) {
    auto& row = out[static_cast<std::size_t>(n)];
    row.resize(wells.size());
    const hfm::State& x = hf.states[static_cast<std::size_t>(n + 1)];
    for (std::size_t w = 0; w < wells.size(); ++w) {
      SampleErrors& e = row[w];
      const int cell = wells[w].cell;
      const double p_rom = ro.well_states(n, 2 * static_cast<int>(w));
      const double s_rom = ro.well_states(n, 2 * static_cast<int>(w) + 1);
      const double p_hfm = x.pressure(cell);
      const double s_hfm = x.saturation(cell);
      e.dp = p_hfm - p_rom;
      e.ds = s_hfm - s_rom;
      e.s_rom = s_rom;
      e.s_hfm = s_hfm;
      if (std::abs(p_hfm) > kTinyRate) {
        e.rel_dp = e.dp / p_hfm;
        e.rel_dp_valid = true;
      }
      if (std::abs(s_hfm) > kTinyRate) {
        e.rel_ds = e.ds / s_hfm;
        e.rel_ds_valid = true;
      }
      const hfm::WellRates& q_h = hf.qoi[static_cast<std::size_t>(n)][w];
      const hfm::WellRates& q_r = ro.qoi[static_cast<std::size_t>(n)][w];
      e.dq_oil = q_h.oil - q_r.oil;
      e.dq_water = q_h.water - q_r.water;
      if (std::abs(q_h.oil) > kTinyRate) {
        e.rel_dq_oil = e.dq_oil / q_h.oil;
        e.rel_dq_oil_valid = true;
      }
      if (std::abs(q_h.water) > kTinyRate) {
        e.rel_dq_water = e.dq_water / q_h.water;
        e.rel_dq_water_valid = true;
      }
      if (is_producer(wells[w]))
        e.label = loc::assign_category(s_rom, s_hfm, eps_a, eps_c);
    }
  }
  return out;
}

double rel_to_abs(double rel_pred, double rom_value, bool* pole_flagged) {
  double denom = 1.0 - rel_pred;
  if (std::abs(denom) < 1.0e-6) {
    denom = denom < 0.0 ? -1.0e-6 : 1.0e-6;
    if (pole_flagged) *pole_flagged = true;
  }
  return rom_value * rel_pred / denom;
}

hfm::WellRates state_error_to_qoi_error(double dp, double ds, double p_rom,
                                        double s_rom, double u,
                                        const hfm::WellSpec& well,
                                        const hfm::FluidModel& fluid) {
  const double s_corr = std::clamp(s_rom + ds, 0.0, 1.0);
  const hfm::WellRates base = hfm::well_rates(p_rom, s_rom, u, well, fluid);
  const hfm::WellRates corr =
      hfm::well_rates(p_rom + dp, s_corr, u, well, fluid);
  return {corr.oil - base.oil, corr.water - base.water};
}

hfm::WellRates correct_qoi(const hfm::WellRates& rom_rates,
                           const hfm::WellRates& delta_hat, bool producer,
                           bool* floored) {
  hfm::WellRates out{rom_rates.oil + delta_hat.oil,
                     rom_rates.water + delta_hat.water};
  if (producer) {
    if (out.oil < 0.0 || out.water < 0.0) {
      if (floored) *floored = true;
      out.oil = std::max(out.oil, 0.0);
      out.water = std::max(out.water, 0.0);
    }
  }
  return out;
}

double Regressor::predict(const Eigen::RowVectorXd& row) const {
  if (zero) return 0.0;
  return kind == RegressorKind::RandomForest ? forest.predict(row)
                                             : lasso.predict(row);
}

int ErrorModelBundle::num_regions() const {
  switch (options.locality) {
    case LocalityKind::Classification: return loc::kNumCategories;
    case LocalityKind::Clustering:
      return producers.empty() ? 1 : producers.front().kmeans.k;
    case LocalityKind::None: return 1;
  }
  return 1;
}

TrainingSampleSet assemble_training_set(
    const std::vector<const rom::RomTrajectory*>& roms,
    const std::vector<const hfm::HfmTrajectory*>& hfms,
    const rom::TpwlOperators& ops, const rom::PodBasis& basis,
    const std::vector<hfm::WellSpec>& wells, const EmmlOptions& opts) {
  if (roms.empty() || roms.size() != hfms.size())
    throw std::invalid_argument("need aligned ROM/HFM training runs");

  TrainingSampleSet set;
  set.catalog = feat::make_catalog(wells, opts.tau);
  for (int w = 0; w < static_cast<int>(wells.size()); ++w) {
    if (is_producer(wells[static_cast<std::size_t>(w)]))
      set.producer_wells.push_back(w);
    else
      set.injector_wells.push_back(w);
  }

  const int n_runs = static_cast<int>(roms.size());
  const int n_steps = roms.front()->num_steps();
  set.samples_per_run = n_steps;

  // Per-run errors, shared across targets.
  std::vector<CaseErrors> errors;
  errors.reserve(static_cast<std::size_t>(n_runs));
  for (int r = 0; r < n_runs; ++r)
    errors.push_back(compute_errors(*hfms[static_cast<std::size_t>(r)],
                                    *roms[static_cast<std::size_t>(r)], wells,
                                    opts.eps_a, opts.eps_c));

  // Memory-augmented features per (run, target well), pooled row blocks.
  const int n_rows = n_runs * n_steps;
  auto build_rows = [&](int well) {
    Eigen::MatrixXd pooled(n_rows,
                           static_cast<Eigen::Index>(set.catalog.augmented_size()));
    for (int r = 0; r < n_runs; ++r) {
      const Eigen::MatrixXd base = feat::feature_matrix(
          *roms[static_cast<std::size_t>(r)], ops, basis, wells, well);
      pooled.middleRows(r * n_steps, n_steps) =
          feat::apply_memory(base, opts.tau).rows;
    }
    return pooled;
  };

  // The pruning mask is fitted once, on the pooled training matrix over all
  // target wells, and frozen for every later stage.
  Eigen::MatrixXd mask_pool(
      n_rows * static_cast<int>(wells.size()),
      static_cast<Eigen::Index>(set.catalog.augmented_size()));
  std::vector<Eigen::MatrixXd> all_rows(wells.size());
  for (std::size_t w = 0; w < wells.size(); ++w) {
    all_rows[w] = build_rows(static_cast<int>(w));
    mask_pool.middleRows(static_cast<Eigen::Index>(w) * n_rows, n_rows) =
        all_rows[w];
  }
  set.mask = feat::prune_correlated(mask_pool, opts.rho_max);

  auto collect = [&](int well, WellSamples& dest) {
    dest.x = feat::select_columns(all_rows[static_cast<std::size_t>(well)],
                                  set.mask);
    dest.errors.reserve(static_cast<std::size_t>(n_rows));
    for (int r = 0; r < n_runs; ++r)
      for (int n = 0; n < n_steps; ++n)
        dest.errors.push_back(
            errors[static_cast<std::size_t>(r)][static_cast<std::size_t>(n)]
                  [static_cast<std::size_t>(well)]);
  };

  set.producers.resize(set.producer_wells.size());
  for (std::size_t p = 0; p < set.producer_wells.size(); ++p) {
    const int well = set.producer_wells[p];
    collect(well, set.producers[p]);
    set.producers[p].cls.resize(n_rows,
                                4 + 2 * static_cast<Eigen::Index>(
                                            set.injector_wells.size()));
    for (int r = 0; r < n_runs; ++r)
      set.producers[p].cls.middleRows(r * n_steps, n_steps) =
          feat::classification_features(*roms[static_cast<std::size_t>(r)], ops,
                                        basis, wells, well);
    set.producers[p].labels.reserve(static_cast<std::size_t>(n_rows));
    for (const auto& e : set.producers[p].errors)
      set.producers[p].labels.push_back(static_cast<int>(e.label));
  }

  // Injector wells pool into one sample block (a single global model covers
  // every injector QoI).
  const int n_inj = static_cast<int>(set.injector_wells.size());
  if (n_inj > 0) {
    set.injectors.x.resize(
        static_cast<Eigen::Index>(n_inj) * n_rows,
        static_cast<Eigen::Index>(set.mask.size()));
    for (int q = 0; q < n_inj; ++q) {
      WellSamples tmp;
      collect(set.injector_wells[static_cast<std::size_t>(q)], tmp);
      set.injectors.x.middleRows(static_cast<Eigen::Index>(q) * n_rows, n_rows) =
          tmp.x;
      set.injectors.errors.insert(set.injectors.errors.end(),
                                  tmp.errors.begin(), tmp.errors.end());
    }
  }
  return set;
}

namespace {

struct TargetSpec {
  // Extracts the (target value, validity) pair this regressor models.
  double (*value)(const SampleErrors&);
  bool (*valid)(const SampleErrors&);
};

TargetSpec target_p(const EmmlOptions& opts) {
  switch (opts.approach) {
    case 1:
      return {[](const SampleErrors& e) { return e.rel_dp; },
              [](const SampleErrors& e) { return e.rel_dp_valid; }};
    case 2:
      return {[](const SampleErrors& e) { return e.rel_dq_oil; },
              [](const SampleErrors& e) { return e.rel_dq_oil_valid; }};
    default:
      return {[](const SampleErrors& e) { return e.dq_oil; },
              [](const SampleErrors&) { return true; }};
  }
}

TargetSpec target_s(const EmmlOptions& opts) {
  switch (opts.approach) {
    case 1:
      return {[](const SampleErrors& e) { return e.ds; },
              [](const SampleErrors&) { return true; }};
    case 2:
      return {[](const SampleErrors& e) { return e.rel_dq_water; },
              [](const SampleErrors& e) { return e.rel_dq_water_valid; }};
    default:
      return {[](const SampleErrors& e) { return e.dq_water; },
              [](const SampleErrors&) { return true; }};
  }
}

Regressor fit_regressor(const Eigen::MatrixXd& x,
                        const std::vector<SampleErrors>& errors,
                        const std::vector<int>& rows, const TargetSpec& target,
                        const EmmlOptions& opts,
                        const learn::ForestOptions& forest_opts,
                        std::uint64_t seed, int workers) {
  std::vector<int> usable;
  usable.reserve(rows.size());
  for (int r : rows)
    if (target.valid(errors[static_cast<std::size_t>(r)])) usable.push_back(r);

  Regressor reg;
  reg.kind = opts.regressor;
  if (usable.size() < 2) {
    reg.zero = true;
    return reg;
  }
  Eigen::MatrixXd xs(static_cast<Eigen::Index>(usable.size()), x.cols());
  Eigen::VectorXd ys(static_cast<Eigen::Index>(usable.size()));
  for (std::size_t i = 0; i < usable.size(); ++i) {
    xs.row(static_cast<Eigen::Index>(i)) = x.row(usable[i]);
    ys[static_cast<Eigen::Index>(i)] =
        target.value(errors[static_cast<std::size_t>(usable[i])]);
  }
  if (opts.regressor == RegressorKind::RandomForest) {
    reg.forest = learn::RandomForest::fit(xs, ys, forest_opts, seed, workers);
  } else {
    const auto grid = learn::default_lambda_grid(xs, ys, opts.lasso_grid_size,
                                                 opts.lasso_min_ratio);
    const int folds = std::min<int>(opts.lasso_folds,
                                    static_cast<int>(usable.size()));
    if (folds >= 2) {
      const auto cv = learn::cv_lambda(xs, ys, folds, grid, seed);
      reg.lasso = learn::fit_lasso(xs, ys, cv.best_lambda);
    } else {
      reg.lasso = learn::fit_lasso(xs, ys, grid.front());
    }
  }
  return reg;
}

std::vector<int> all_rows(std::size_t n) {
  std::vector<int> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<int>(i);
  return rows;
}

learn::ForestOptions tuned_options(const Eigen::MatrixXd& x,
                                   const std::vector<SampleErrors>& errors,
                                   const TargetSpec& target,
                                   const EmmlOptions& opts, std::uint64_t seed) {
  if (opts.tuning_grid.empty() ||
      opts.regressor != RegressorKind::RandomForest)
    return opts.forest;
  std::vector<int> usable;
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (target.valid(errors[i])) usable.push_back(static_cast<int>(i));
  if (static_cast<int>(usable.size()) < 2 * opts.min_region_samples)
    return opts.forest;
  Eigen::MatrixXd xs(static_cast<Eigen::Index>(usable.size()), x.cols());
  Eigen::VectorXd ys(static_cast<Eigen::Index>(usable.size()));
  for (std::size_t i = 0; i < usable.size(); ++i) {
    xs.row(static_cast<Eigen::Index>(i)) = x.row(usable[i]);
    ys[static_cast<Eigen::Index>(i)] =
        target.value(errors[static_cast<std::size_t>(usable[i])]);
  }
  return learn::tune_forest(xs, ys, opts.tuning_grid, seed);
}

}  // namespace

ErrorModelBundle train_bundle(const TrainingSampleSet& samples,
                              const EmmlOptions& opts, std::uint64_t seed,
                              int workers) {
  ErrorModelBundle bundle;
  bundle.options = opts;
  bundle.catalog = samples.catalog;
  bundle.mask = samples.mask;
  bundle.producer_wells = samples.producer_wells;
  bundle.injector_wells = samples.injector_wells;
  bundle.producers.resize(samples.producers.size());

  const TargetSpec tp = target_p(opts);
  const TargetSpec ts = target_s(opts);

  // (well, region, target) jobs are independent; parallelize over producers.
  parallel_for(samples.producers.size(), workers, [&](std::size_t p) {
    const WellSamples& ws = samples.producers[p];
    ProducerModels& pm = bundle.producers[p];
    const std::uint64_t well_seed = derive_seed(seed, "producer", p);

    const learn::ForestOptions forest_opts =
        tuned_options(ws.x, ws.errors, ts, opts, derive_seed(well_seed, "tune"));

    pm.global.model_p = fit_regressor(ws.x, ws.errors, all_rows(ws.errors.size()),
                                      tp, opts, forest_opts,
                                      derive_seed(well_seed, "gp"), 1);
    pm.global.model_s = fit_regressor(ws.x, ws.errors, all_rows(ws.errors.size()),
                                      ts, opts, forest_opts,
                                      derive_seed(well_seed, "gs"), 1);

    std::vector<std::vector<int>> region_rows;
    if (opts.locality == LocalityKind::Classification) {
      region_rows.resize(loc::kNumCategories);
      for (std::size_t i = 0; i < ws.labels.size(); ++i)
        region_rows[static_cast<std::size_t>(ws.labels[i])].push_back(
            static_cast<int>(i));

      int distinct = 0;
      for (const auto& rows : region_rows)
        if (!rows.empty()) ++distinct;
      if (distinct < 2) {
        pm.classifier_constant = true;
        pm.constant_label = ws.labels.empty() ? 0 : ws.labels.front();
      } else {
        pm.classifier = learn::RandomForest::fit_classifier(
            ws.cls, ws.labels, loc::kNumCategories, opts.classifier_forest,
            derive_seed(well_seed, "classifier"), 1);
      }
    } else if (opts.locality == LocalityKind::Clustering) {
      pm.pca = loc::fit_pca(ws.x, opts.pca_variance);
      const Eigen::MatrixXd reduced = pm.pca.apply(ws.x);
      const int k = loc::choose_k_elbow(reduced, opts.cluster_k_range,
                                        derive_seed(well_seed, "elbow"));
      pm.kmeans = loc::kmeans_fit(reduced, k, derive_seed(well_seed, "kmeans"));
      region_rows.resize(static_cast<std::size_t>(k));
      for (Eigen::Index i = 0; i < reduced.rows(); ++i)
        region_rows[static_cast<std::size_t>(
                        pm.kmeans.assign(reduced.row(i)))]
            .push_back(static_cast<int>(i));
    }

    pm.regions.resize(region_rows.size());
    for (std::size_t r = 0; r < region_rows.size(); ++r) {
      RegionModels& rm = pm.regions[r];
      if (static_cast<int>(region_rows[r].size()) < opts.min_region_samples) {
        rm = pm.global;
        rm.fallback = true;
        bundle.region_starved = true;
        continue;
      }
      rm.model_p = fit_regressor(ws.x, ws.errors, region_rows[r], tp, opts,
                                 forest_opts,
                                 derive_seed(well_seed, "rp", r), 1);
      rm.model_s = fit_regressor(ws.x, ws.errors, region_rows[r], ts, opts,
                                 forest_opts,
                                 derive_seed(well_seed, "rs", r), 1);
    }
  });

  if (!samples.injector_wells.empty()) {
    const std::uint64_t inj_seed = derive_seed(seed, "injectors");
    const learn::ForestOptions forest_opts = tuned_options(
        samples.injectors.x, samples.injectors.errors, ts, opts,
        derive_seed(inj_seed, "tune"));
    const auto rows = all_rows(samples.injectors.errors.size());
    if (opts.approach == 1) {
      bundle.injector_global.model_p =
          fit_regressor(samples.injectors.x, samples.injectors.errors, rows, tp,
                        opts, forest_opts, derive_seed(inj_seed, "p"), workers);
    } else {
      bundle.injector_global.model_p.zero = true;
    }
    bundle.injector_global.model_s =
        fit_regressor(samples.injectors.x, samples.injectors.errors, rows, ts,
                      opts, forest_opts, derive_seed(inj_seed, "s"), workers);
  }
  return bundle;
}

CasePrediction predict_case(const ErrorModelBundle& bundle,
                            const rom::RomTrajectory& ro,
                            const rom::TpwlOperators& ops,
                            const rom::PodBasis& basis,
                            const std::vector<hfm::WellSpec>& wells,
                            const hfm::FluidModel& fluid) {
  const int n_steps = ro.num_steps();
  const EmmlOptions& opts = bundle.options;

  CasePrediction out;
  out.delta.assign(static_cast<std::size_t>(n_steps),
                   std::vector<hfm::WellRates>(wells.size()));
  out.corrected = out.delta;
  out.producer_region.assign(
      static_cast<std::size_t>(n_steps),
      std::vector<int>(bundle.producer_wells.size(), 0));

  // Masked feature rows per target well.
  std::vector<Eigen::MatrixXd> x_by_well(wells.size());
  for (std::size_t w = 0; w < wells.size(); ++w) {
    const Eigen::MatrixXd base =
        feat::feature_matrix(ro, ops, basis, wells, static_cast<int>(w));
    x_by_well[w] = feat::select_columns(feat::apply_memory(base, opts.tau).rows,
                                        bundle.mask);
  }

  auto apply_models = [&](const RegionModels& rm, int step, int well) {
    const Eigen::RowVectorXd row =
        x_by_well[static_cast<std::size_t>(well)].row(step);
    const double p_rom = ro.well_states(step, 2 * well);
    const double s_rom = ro.well_states(step, 2 * well + 1);
    const double u = ro.steps[static_cast<std::size_t>(step)].u[well];
    const hfm::WellSpec& spec = wells[static_cast<std::size_t>(well)];
    const hfm::WellRates& q_rom =
        ro.qoi[static_cast<std::size_t>(step)][static_cast<std::size_t>(well)];

    hfm::WellRates delta;
    bool pole = false;
    if (opts.approach == 1) {
      const double rel_p = rm.model_p.predict(row);
      const double ds = rm.model_s.predict(row);
      const double dp = rel_to_abs(rel_p, p_rom, &pole);
      delta = state_error_to_qoi_error(dp, ds, p_rom, s_rom, u, spec, fluid);
    } else if (opts.approach == 2) {
      if (spec.kind == hfm::WellKind::Producer)
        delta.oil = rel_to_abs(rm.model_p.predict(row), q_rom.oil, &pole);
      delta.water = rel_to_abs(rm.model_s.predict(row), q_rom.water, &pole);
    } else {
      if (spec.kind == hfm::WellKind::Producer)
        delta.oil = rm.model_p.predict(row);
      delta.water = rm.model_s.predict(row);
    }
    if (pole) out.pole_flagged = true;

    bool floored = false;
    const auto corrected = correct_qoi(
        q_rom, delta, spec.kind == hfm::WellKind::Producer, &floored);
    if (floored) out.floored = true;
    out.delta[static_cast<std::size_t>(step)][static_cast<std::size_t>(well)] =
        delta;
    out.corrected[static_cast<std::size_t>(step)]
                 [static_cast<std::size_t>(well)] = corrected;
  };

  for (std::size_t p = 0; p < bundle.producer_wells.size(); ++p) {
    const int well = bundle.producer_wells[p];
    const ProducerModels& pm = bundle.producers[p];
    Eigen::MatrixXd cls;
    if (opts.locality == LocalityKind::Classification)
      cls = feat::classification_features(ro, ops, basis, wells, well);
    for (int n = 0; n < n_steps; ++n) {
      int region = 0;
      if (opts.locality == LocalityKind::Classification) {
        region = pm.classifier_constant
                     ? pm.constant_label
                     : static_cast<int>(pm.classifier.predict(cls.row(n)));
      } else if (opts.locality == LocalityKind::Clustering) {
        region = pm.kmeans.assign(pm.pca.apply_row(
            x_by_well[static_cast<std::size_t>(well)].row(n)));
      }
      out.producer_region[static_cast<std::size_t>(n)][p] = region;
      const RegionModels& rm =
          opts.locality == LocalityKind::None || pm.regions.empty()
              ? pm.global
              : pm.regions[static_cast<std::size_t>(region)];
      apply_models(rm, n, well);
    }
  }
  for (int well : bundle.injector_wells)
    for (int n = 0; n < n_steps; ++n)
      apply_models(bundle.injector_global, n, well);
  return out;
}

namespace {

void save_regressor(io::BlobWriter& out, const std::string& prefix,
                    const Regressor& reg) {
  out.meta()[prefix + ".kind"] =
      reg.zero ? "zero"
               : (reg.kind == RegressorKind::RandomForest ? "forest" : "lasso");
  if (reg.zero) return;
  if (reg.kind == RegressorKind::RandomForest) {
    reg.forest.save(out, prefix + ".forest");
  } else {
    reg.lasso.save(out, prefix + ".lasso");
  }
}

Regressor load_regressor(const io::BlobReader& in, const std::string& prefix) {
  Regressor reg;
  const std::string kind = in.meta().at(prefix + ".kind");
  if (kind == "zero") {
    reg.zero = true;
  } else if (kind == "forest") {
    reg.kind = RegressorKind::RandomForest;
    reg.forest = learn::RandomForest::load(in, prefix + ".forest");
  } else {
    reg.kind = RegressorKind::Lasso;
    reg.lasso = learn::LassoModel::load(in, prefix + ".lasso");
  }
  return reg;
}

void save_region(io::BlobWriter& out, const std::string& prefix,
                 const RegionModels& rm) {
  out.meta()[prefix + ".fallback"] = rm.fallback;
  save_regressor(out, prefix + ".p", rm.model_p);
  save_regressor(out, prefix + ".s", rm.model_s);
}

RegionModels load_region(const io::BlobReader& in, const std::string& prefix) {
  RegionModels rm;
  rm.fallback = in.meta().at(prefix + ".fallback");
  rm.model_p = load_regressor(in, prefix + ".p");
  rm.model_s = load_regressor(in, prefix + ".s");
  return rm;
}

}  // namespace

void ErrorModelBundle::save(const std::filesystem::path& base) const {
  io::BlobWriter out(base);
  io::json& meta = out.meta();
  meta["approach"] = options.approach;
  meta["regressor"] =
      options.regressor == RegressorKind::RandomForest ? "rf" : "lasso";
  meta["locality"] = options.locality == LocalityKind::Classification
                         ? "classification"
                         : options.locality == LocalityKind::Clustering
                               ? "clustering"
                               : "none";
  meta["tau"] = options.tau;
  meta["rho_max"] = options.rho_max;
  meta["eps_a"] = options.eps_a;
  meta["eps_c"] = options.eps_c;
  meta["min_region_samples"] = options.min_region_samples;
  meta["catalog"] = catalog.names;
  meta["mask"] = mask;
  meta["producer_wells"] = producer_wells;
  meta["injector_wells"] = injector_wells;
  meta["region_starved"] = region_starved;
  meta["num_producers"] = producers.size();

  for (std::size_t p = 0; p < producers.size(); ++p) {
    const std::string prefix = "prod" + std::to_string(p);
    const ProducerModels& pm = producers[p];
    meta[prefix + ".num_regions"] = pm.regions.size();
    meta[prefix + ".classifier_constant"] = pm.classifier_constant;
    meta[prefix + ".constant_label"] = pm.constant_label;
    for (std::size_t r = 0; r < pm.regions.size(); ++r)
      save_region(out, prefix + ".region" + std::to_string(r), pm.regions[r]);
    save_region(out, prefix + ".global", pm.global);
    if (options.locality == LocalityKind::Classification &&
        !pm.classifier_constant)
      pm.classifier.save(out, prefix + ".classifier");
    if (options.locality == LocalityKind::Clustering) {
      pm.pca.save(out, prefix + ".pca");
      pm.kmeans.save(out, prefix + ".kmeans");
    }
  }
  save_region(out, "injector_global", injector_global);
  out.finish();
}

ErrorModelBundle ErrorModelBundle::load(const std::filesystem::path& base) {
  io::BlobReader in(base);
  const io::json& meta = in.meta();
  ErrorModelBundle bundle;
  bundle.options.approach = meta.at("approach");
  bundle.options.regressor = meta.at("regressor") == "rf"
                                 ? RegressorKind::RandomForest
                                 : RegressorKind::Lasso;
  const std::string locality = meta.at("locality");
  bundle.options.locality = locality == "classification"
                                ? LocalityKind::Classification
                                : locality == "clustering"
                                      ? LocalityKind::Clustering
                                      : LocalityKind::None;
  bundle.options.tau = meta.at("tau");
  bundle.options.rho_max = meta.at("rho_max");
  bundle.options.eps_a = meta.at("eps_a");
  bundle.options.eps_c = meta.at("eps_c");
  bundle.options.min_region_samples = meta.at("min_region_samples");
  bundle.catalog.names = meta.at("catalog").get<std::vector<std::string>>();
  bundle.catalog.memory = bundle.options.tau;
  bundle.mask = meta.at("mask").get<std::vector<int>>();
  bundle.producer_wells = meta.at("producer_wells").get<std::vector<int>>();
  bundle.injector_wells = meta.at("injector_wells").get<std::vector<int>>();
  bundle.region_starved = meta.at("region_starved");

  const auto n_prod = meta.at("num_producers").get<std::size_t>();
  bundle.producers.resize(n_prod);
  for (std::size_t p = 0; p < n_prod; ++p) {
    const std::string prefix = "prod" + std::to_string(p);
    ProducerModels& pm = bundle.producers[p];
    const auto n_regions = meta.at(prefix + ".num_regions").get<std::size_t>();
    pm.classifier_constant = meta.at(prefix + ".classifier_constant");
    pm.constant_label = meta.at(prefix + ".constant_label");
    pm.regions.resize(n_regions);
    for (std::size_t r = 0; r < n_regions; ++r)
      pm.regions[r] = load_region(in, prefix + ".region" + std::to_string(r));
    pm.global = load_region(in, prefix + ".global");
    if (bundle.options.locality == LocalityKind::Classification &&
        !pm.classifier_constant)
      pm.classifier = learn::RandomForest::load(in, prefix + ".classifier");
    if (bundle.options.locality == LocalityKind::Clustering) {
      pm.pca = loc::PcaTransform::load(in, prefix + ".pca");
      pm.kmeans = loc::KMeansModel::load(in, prefix + ".kmeans");
    }
  }
  bundle.injector_global = load_region(in, "injector_global");
  return bundle;
}

}  // namespace emlab::err
