#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emlab/config.hpp"
#include "emlab/error_models.hpp"
#include "emlab/rom.hpp"
#include "emlab/romes.hpp"

namespace emlab::pipe {

namespace fs = std::filesystem;

// One perturbed BHP schedule per requested case, drawn per well and per
// control period within +-amplitude of the primary profile (resampled onto
// the test period grid); draws pushing any injector below any producer are
// retried.
std::vector<hfm::Schedule> generate_schedules(
    const hfm::Schedule& primary, const std::vector<hfm::WellSpec>& wells,
    int n_bhp, double amplitude, double spread_pa, double period_length,
    std::uint64_t seed);

// Time-weighted RMS relative BHP deviation from the primary schedule over
// producers and over injectors, on the union time grid.
std::pair<double, double> perturbation_metrics(
    const hfm::Schedule& schedule, const hfm::Schedule& primary,
    const std::vector<hfm::WellSpec>& wells);

struct SplitIds {
  std::vector<int> train;
  std::vector<int> test;
  std::vector<int> romes;  // subset of test
};

// k-means (k = n_train) over the (duP, duI) plane; the schedule nearest each
// center becomes a training case, the rest are test cases, and a seeded
// draw from the test set forms the ROMES set.
SplitIds split_train_test(
    const std::vector<std::pair<double, double>>& perturbations, int n_train,
    int n_romes, std::uint64_t seed);

void save_trajectory(const fs::path& dir, const std::string& stem,
                     const hfm::HfmTrajectory& traj,
                     const std::vector<hfm::WellSpec>& wells);
hfm::HfmTrajectory load_trajectory(const fs::path& dir, const std::string& stem,
                                   const std::vector<hfm::WellSpec>& wells);

void save_schedule_set(const fs::path& path,
                       const std::vector<hfm::Schedule>& schedules);
std::vector<hfm::Schedule> load_schedule_set(const fs::path& path);

// Metric slots: 0 oil at producers, 1 water at producers, 2 water at
// injectors.
inline constexpr int kNumMetrics = 3;
extern const char* const kMetricNames[kNumMetrics];

struct CaseMetrics {
  int id = -1;
  std::string split;  // "train" | "test" | "romes"
  double du_p = 0.0;
  double du_i = 0.0;
  double e_rl[kNumMetrics] = {0.0, 0.0, 0.0};
  double e_corr[kNumMetrics] = {0.0, 0.0, 0.0};
  double indicator[kNumMetrics] = {0.0, 0.0, 0.0};  // h-bar of predicted errors
  double true_h[kNumMetrics] = {0.0, 0.0, 0.0};     // h-bar of true errors
  double misclass = 0.0;  // fraction over (step, producer) samples
};

struct MetricsReport {
  std::vector<CaseMetrics> cases;
  double median_e_rl[kNumMetrics] = {0.0, 0.0, 0.0};
  double median_e_corr[kNumMetrics] = {0.0, 0.0, 0.0};
  double misclassification_rate = 0.0;  // pooled over test cases
  int improved_pairs = 0;               // test (case, metric) with e_corr < e_rl
  int total_pairs = 0;
};

// Relative time-integrated errors, direct summation over the shared grid.
double relative_time_integrated_error(const std::vector<double>& delta,
                                      const std::vector<double>& q_hfm,
                                      const std::vector<double>& dts);

// Staged, resumable experiment. Stages run in a fixed order, each persisting
// its artifacts plus a marker (config hash + input/output checksums). With
// resume enabled, stages whose markers still match are skipped. A stage may
// only read artifacts of stages it declares as inputs; in particular, test-
// case high-fidelity runs exist only downstream of the prediction stage.
class Experiment {
 public:
  Experiment(ExperimentConfig config, fs::path out_dir, bool resume);

  static const std::vector<std::string>& stage_order();
  static const std::map<std::string, std::vector<std::string>>& stage_inputs();
  static void validate_stage_graph();

  void run_all();
  void run_through(const std::string& stage);

  const ExperimentConfig& config() const { return config_; }
  const fs::path& out_dir() const { return out_; }
  MetricsReport read_metrics() const;

  // Content-addressed store for deterministic case simulations, shareable
  // across experiments that differ only in error-modeling settings.
  void set_hfm_cache(fs::path dir) { hfm_cache_ = std::move(dir); }

 private:
  void run_stage(const std::string& stage);
  bool stage_current(const std::string& stage) const;
  void mark_stage(const std::string& stage);
  void write_manifest();

  void stage_rom();
  void stage_schedules();
  void stage_split();
  void stage_train_runs();
  void stage_samples();
  void stage_bundle();
  void stage_predict();
  void stage_eval_runs();
  void stage_romes();
  void stage_metrics();
  void stage_plot_data();

  // Lazily loaded shared artifacts.
  const hfm::Model& model();
  const rom::PodBasis& basis();
  const rom::TpwlOperators& ops();
  const std::vector<hfm::Schedule>& schedules();
  const SplitIds& split();
  const err::ErrorModelBundle& bundle();

  rom::RomTrajectory run_rom_case(int id);
  hfm::HfmTrajectory run_hfm_case(int id);
  void predictions_for_case(int id, const rom::RomTrajectory& ro,
                            std::vector<std::vector<hfm::WellRates>>& delta,
                            std::vector<std::vector<hfm::WellRates>>& corrected,
                            std::vector<std::vector<int>>& regions) const;

  ExperimentConfig config_;
  fs::path out_;
  bool resume_ = false;
  int workers_ = 1;
  fs::path hfm_cache_;
  std::vector<fs::path> stage_outputs_;  // collected by the running stage

  std::optional<hfm::Model> model_;
  std::optional<rom::PodBasis> basis_;
  std::optional<rom::TpwlOperators> ops_;
  std::optional<std::vector<hfm::Schedule>> schedules_;
  std::optional<SplitIds> split_;
  std::optional<err::ErrorModelBundle> bundle_;
};

}  // namespace emlab::pipe
