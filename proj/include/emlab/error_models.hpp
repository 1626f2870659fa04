#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "emlab/features.hpp"
#include "emlab/learners.hpp"
#include "emlab/locality.hpp"
#include "emlab/rom.hpp"

namespace emlab::err {

enum class RegressorKind { RandomForest, Lasso };
enum class LocalityKind { Classification, Clustering, None };

struct EmmlOptions {
  // 1: relative pressure + absolute saturation state errors (hybrid);
  // 2: relative QoI errors; 0: absolute QoI errors.
  int approach = 1;
  RegressorKind regressor = RegressorKind::RandomForest;
  LocalityKind locality = LocalityKind::Classification;
  int tau = 1;
  double rho_max = 0.95;
  double eps_a = 0.05;
  double eps_c = 0.6;
  int min_region_samples = 50;
  learn::ForestOptions forest;
  learn::ForestOptions classifier_forest{.n_trees = 200, .m_try = 0,
                                         .min_leaf = 1};
  std::vector<learn::ForestOptions> tuning_grid;  // empty: no OOB tuning
  int lasso_folds = 5;
  int lasso_grid_size = 30;
  double lasso_min_ratio = 1.0e-4;
  double pca_variance = 0.95;
  std::vector<int> cluster_k_range{2, 3, 4, 5, 6};
};

// Per-step, per-well surrogate errors. Relative quantities carry validity
// flags; rows whose reference value vanishes (water rate before water
// breakthrough) never enter relative-error training.
struct SampleErrors {
  double dp = 0.0;  // well-block pressure error (HFM - ROM)
  double ds = 0.0;  // well-block saturation error against the clamped ROM value
  double rel_dp = 0.0;
  bool rel_dp_valid = false;
  double rel_ds = 0.0;
  bool rel_ds_valid = false;
  double dq_oil = 0.0;
  double dq_water = 0.0;
  double rel_dq_oil = 0.0;
  bool rel_dq_oil_valid = false;
  double rel_dq_water = 0.0;
  bool rel_dq_water_valid = false;
  double s_rom = 0.0;
  double s_hfm = 0.0;
  loc::Category label = loc::Category::A;
};

using CaseErrors = std::vector<std::vector<SampleErrors>>;  // [step][well]

// Requires the paired runs to share the time grid.
CaseErrors compute_errors(const hfm::HfmTrajectory& hf,
                          const rom::RomTrajectory& ro,
                          const std::vector<hfm::WellSpec>& wells,
                          double eps_a, double eps_c);

// delta = value * rel / (1 - rel). The conversion has a pole at rel = 1;
// the denominator is floored at 1e-6 in magnitude (flagged).
double rel_to_abs(double rel_pred, double rom_value,
                  bool* pole_flagged = nullptr);

// QoI error implied by a modeled well-block state error: re-evaluates the
// Peaceman map at the corrected state (saturation clamped to [0,1] first).
hfm::WellRates state_error_to_qoi_error(double dp, double ds, double p_rom,
                                        double s_rom, double u,
                                        const hfm::WellSpec& well,
                                        const hfm::FluidModel& fluid);

// q_corr = q_rom + delta_hat, with producer rates floored at zero.
hfm::WellRates correct_qoi(const hfm::WellRates& rom_rates,
                           const hfm::WellRates& delta_hat, bool producer,
                           bool* floored = nullptr);

struct Regressor {
  RegressorKind kind = RegressorKind::RandomForest;
  bool zero = false;  // constant-zero model (no valid training rows)
  learn::RandomForest forest;
  learn::LassoModel lasso;

  double predict(const Eigen::RowVectorXd& row) const;
};

// Two regressors per region: under approach 1 they model the relative
// pressure error and the saturation error; under approaches 2/0 they model
// the oil- and water-rate errors (injector pools use only the water slot).
struct RegionModels {
  Regressor model_p;
  Regressor model_s;
  bool fallback = false;
};

struct ProducerModels {
  std::vector<RegionModels> regions;
  RegionModels global;
  learn::RandomForest classifier;
  bool classifier_constant = false;
  int constant_label = 0;
  loc::PcaTransform pca;
  loc::KMeansModel kmeans;
};

struct ErrorModelBundle {
  EmmlOptions options;
  feat::FeatureCatalog catalog;
  std::vector<int> mask;  // retained augmented feature columns (frozen)
  std::vector<int> producer_wells;
  std::vector<int> injector_wells;
  std::vector<ProducerModels> producers;
  RegionModels injector_global;
  bool region_starved = false;  // some region fell back to the global model

  int num_regions() const;

  void save(const std::filesystem::path& base) const;
  static ErrorModelBundle load(const std::filesystem::path& base);
};

struct WellSamples {
  Eigen::MatrixXd x;    // masked, memory-augmented feature rows
  Eigen::MatrixXd cls;  // classification-feature rows (producers only)
  std::vector<SampleErrors> errors;
  std::vector<int> labels;  // category index per row (producers only)
};

struct TrainingSampleSet {
  feat::FeatureCatalog catalog;
  std::vector<int> mask;
  std::vector<int> producer_wells;
  std::vector<int> injector_wells;
  std::vector<WellSamples> producers;  // aligned with producer_wells
  WellSamples injectors;               // pooled over injector wells
  int samples_per_run = 0;
};

// Builds one sample per (run, step, well): memory-augmented features pruned
// with a mask fitted here (training data only), paired errors, and category
// labels for producers.
TrainingSampleSet assemble_training_set(
    const std::vector<const rom::RomTrajectory*>& roms,
    const std::vector<const hfm::HfmTrajectory*>& hfms,
    const rom::TpwlOperators& ops, const rom::PodBasis& basis,
    const std::vector<hfm::WellSpec>& wells, const EmmlOptions& opts);

ErrorModelBundle train_bundle(const TrainingSampleSet& samples,
                              const EmmlOptions& opts, std::uint64_t seed,
                              int workers = 1);

struct CasePrediction {
  std::vector<std::vector<hfm::WellRates>> delta;      // [step][well]
  std::vector<std::vector<hfm::WellRates>> corrected;  // [step][well]
  std::vector<std::vector<int>> producer_region;       // [step][producer slot]
  bool floored = false;
  bool pole_flagged = false;
};

CasePrediction predict_case(const ErrorModelBundle& bundle,
                            const rom::RomTrajectory& ro,
                            const rom::TpwlOperators& ops,
                            const rom::PodBasis& basis,
                            const std::vector<hfm::WellSpec>& wells,
                            const hfm::FluidModel& fluid);

}  // namespace emlab::err
