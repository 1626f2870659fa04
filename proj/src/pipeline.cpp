#include "emlab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "emlab/features.hpp"

namespace emlab::pipe {

const char* const kMetricNames[kNumMetrics] = {"oil_prod", "water_prod",
                                               "water_inj"};

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<hfm::Schedule> generate_schedules(
    const hfm::Schedule& primary, const std::vector<hfm::WellSpec>& wells,
    int n_bhp, double amplitude, double spread_pa, double period_length,
    std::uint64_t seed) {
  if (n_bhp < 1) throw std::invalid_argument("n_bhp must be >= 1");
  const int periods = std::max(
      1, static_cast<int>(std::round(primary.horizon / period_length)));

  std::vector<hfm::Schedule> out;
  out.reserve(static_cast<std::size_t>(n_bhp));
  for (int case_id = 0; case_id < n_bhp; ++case_id) {
    Rng rng(derive_seed(seed, "schedule", static_cast<std::uint64_t>(case_id)));
    hfm::Schedule s;
    s.horizon = primary.horizon;
    for (int k = 0; k < periods; ++k) {
      s.control_times.push_back(s.horizon * (k + 1) / periods);
      const double mid = s.horizon * (k + 0.5) / periods;
      const Eigen::VectorXd base = primary.controls_at(mid);
      std::vector<double> row(wells.size());
      bool valid = false;
      for (int attempt = 0; attempt < 1000 && !valid; ++attempt) {
        double max_prod = -1.0e300, min_inj = 1.0e300;
        for (std::size_t w = 0; w < wells.size(); ++w) {
          row[w] = base[static_cast<Eigen::Index>(w)] +
                   rng.uniform(-amplitude, amplitude) * spread_pa;
          if (wells[w].kind == hfm::WellKind::Injector)
            min_inj = std::min(min_inj, row[w]);
          else
            max_prod = std::max(max_prod, row[w]);
        }
        valid = min_inj > max_prod;
      }
      if (!valid)
        throw std::runtime_error(
            "could not draw a schedule keeping injectors above producers");
      s.bhp.push_back(row);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<double, double> perturbation_metrics(
    const hfm::Schedule& schedule, const hfm::Schedule& primary,
    const std::vector<hfm::WellSpec>& wells) {
  // Union time grid; both profiles are piecewise constant on it.
  std::vector<double> grid{0.0};
  grid.insert(grid.end(), schedule.control_times.begin(),
              schedule.control_times.end());
  grid.insert(grid.end(), primary.control_times.begin(),
              primary.control_times.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  double acc_p = 0.0, acc_i = 0.0, total = 0.0;
  int n_p = 0, n_i = 0;
  for (const auto& w : wells)
    (w.kind == hfm::WellKind::Producer ? n_p : n_i) += 1;

  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double dt = grid[k] - grid[k - 1];
    if (dt <= 0.0) continue;
    const double mid = 0.5 * (grid[k] + grid[k - 1]);
    const Eigen::VectorXd u = schedule.controls_at(mid);
    const Eigen::VectorXd u0 = primary.controls_at(mid);
    total += dt;
    for (std::size_t w = 0; w < wells.size(); ++w) {
      const double rel = (u[static_cast<Eigen::Index>(w)] -
                          u0[static_cast<Eigen::Index>(w)]) /
                         u0[static_cast<Eigen::Index>(w)];
      if (wells[w].kind == hfm::WellKind::Producer)
        acc_p += dt * rel * rel;
      else
        acc_i += dt * rel * rel;
    }
  }
  const double du_p = n_p > 0 ? std::sqrt(acc_p / (n_p * total)) : 0.0;
  const double du_i = n_i > 0 ? std::sqrt(acc_i / (n_i * total)) : 0.0;
  return {du_p, du_i};
}

SplitIds split_train_test(
    const std::vector<std::pair<double, double>>& perturbations, int n_train,
    int n_romes, std::uint64_t seed) {
  const int n = static_cast<int>(perturbations.size());
  if (n_train < 1 || n_train >= n)
    throw std::invalid_argument("n_train must lie in [1, n_bhp)");

  Eigen::MatrixXd points(n, 2);
  for (int i = 0; i < n; ++i) {
    points(i, 0) = perturbations[static_cast<std::size_t>(i)].first;
    points(i, 1) = perturbations[static_cast<std::size_t>(i)].second;
  }
  const loc::KMeansModel km =
      loc::kmeans_fit(points, n_train, derive_seed(seed, "split-kmeans"));

  // The schedule nearest each cluster center joins the training set; centers
  // claim schedules in index order, skipping already-taken ones.
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  SplitIds ids;
  for (int c = 0; c < n_train; ++c) {
    int best = -1;
    double best_d = 0.0;
    for (int i = 0; i < n; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      const Eigen::RowVectorXd std_row =
          (points.row(i) - km.mean.transpose())
              .cwiseQuotient(km.scale.transpose());
      const double d = (std_row - km.centers.row(c)).squaredNorm();
      if (best < 0 || d < best_d) {
        best = i;
        best_d = d;
      }
    }
    taken[static_cast<std::size_t>(best)] = true;
    ids.train.push_back(best);
  }
  std::sort(ids.train.begin(), ids.train.end());
  for (int i = 0; i < n; ++i)
    if (!taken[static_cast<std::size_t>(i)]) ids.test.push_back(i);

  n_romes = std::min<int>(n_romes, static_cast<int>(ids.test.size()));
  Rng rng(derive_seed(seed, "romes-subset"));
  const auto perm = rng.permutation(ids.test.size());
  for (int k = 0; k < n_romes; ++k)
    ids.romes.push_back(ids.test[perm[static_cast<std::size_t>(k)]]);
  std::sort(ids.romes.begin(), ids.romes.end());
  return ids;
}

void save_trajectory(const fs::path& dir, const std::string& stem,
                     const hfm::HfmTrajectory& traj,
                     const std::vector<hfm::WellSpec>& wells) {
  const int n_steps = traj.num_steps();
  const auto dofs = traj.states.front().values.size();
  Eigen::MatrixXd states(n_steps + 1, dofs);
  for (int k = 0; k <= n_steps; ++k)
    states.row(k) = traj.states[static_cast<std::size_t>(k)].values;
  io::save_matrix(dir / (stem + "_states"), states,
                  {"pressure_saturation_interleaved"}, "Pa,fraction");

  std::vector<std::string> header{"time_days", "dt_days"};
  for (const auto& w : wells) {
    if (w.kind == hfm::WellKind::Producer) header.push_back("qo[" + w.name + "]");
    header.push_back("qw[" + w.name + "]");
  }
  header.insert(header.end(), {"pvi", "inj_vol_m3", "prod_vol_m3"});
  io::CsvWriter csv(dir / (stem + "_series.csv"), header);
  const double rate_to_day = units::day;  // m3/s -> m3/day
  for (int nn = 0; nn < n_steps; ++nn) {
    const auto k = static_cast<std::size_t>(nn);
    std::vector<double> row{traj.times[k] / units::day,
                            traj.dts[k] / units::day};
    for (std::size_t w = 0; w < wells.size(); ++w) {
      if (wells[w].kind == hfm::WellKind::Producer)
        row.push_back(traj.qoi[k][w].oil * rate_to_day);
      row.push_back(traj.qoi[k][w].water * rate_to_day);
    }
    row.push_back(traj.pvi[k]);
    row.push_back(traj.injected_water[k]);
    row.push_back(traj.produced_water[k]);
    csv.row(row);
  }
}

hfm::HfmTrajectory load_trajectory(const fs::path& dir, const std::string& stem,
                                   const std::vector<hfm::WellSpec>& wells) {
  hfm::HfmTrajectory traj;
  const Eigen::MatrixXd states = io::load_matrix(dir / (stem + "_states"));
  for (Eigen::Index k = 0; k < states.rows(); ++k) {
    hfm::State st;
    st.values = states.row(k);
    traj.states.push_back(std::move(st));
  }
  const io::CsvTable series = io::read_csv(dir / (stem + "_series.csv"));
  const int c_time = series.column("time_days");
  const int c_dt = series.column("dt_days");
  const int c_pvi = series.column("pvi");
  const int c_inj = series.column("inj_vol_m3");
  const int c_prod = series.column("prod_vol_m3");
  for (std::size_t r = 0; r < series.rows.size(); ++r) {
    traj.times.push_back(series.num(r, c_time) * units::day);
    traj.dts.push_back(series.num(r, c_dt) * units::day);
    traj.pvi.push_back(series.num(r, c_pvi));
    traj.injected_water.push_back(series.num(r, c_inj));
    traj.produced_water.push_back(series.num(r, c_prod));
    std::vector<hfm::WellRates> rates(wells.size());
    for (std::size_t w = 0; w < wells.size(); ++w) {
      if (wells[w].kind == hfm::WellKind::Producer) {
        rates[w].oil =
            series.num(r, series.column("qo[" + wells[w].name + "]")) /
            units::day;
      }
      rates[w].water =
          series.num(r, series.column("qw[" + wells[w].name + "]")) /
          units::day;
    }
    traj.qoi.push_back(std::move(rates));
  }
  return traj;
}

void save_schedule_set(const fs::path& path,
                       const std::vector<hfm::Schedule>& schedules) {
  io::json arr = io::json::array();
  for (const auto& s : schedules) {
    io::json times = io::json::array();
    for (double t : s.control_times) times.push_back(t / units::day);
    io::json bhp = io::json::array();
    for (const auto& row : s.bhp) {
      io::json r = io::json::array();
      for (double v : row) r.push_back(v / units::psi);
      bhp.push_back(r);
    }
    arr.push_back({{"horizon_days", s.horizon / units::day},
                   {"control_times_days", times},
                   {"bhp_psi", bhp}});
  }
  io::write_json_file(path, arr);
}

std::vector<hfm::Schedule> load_schedule_set(const fs::path& path) {
  const io::json arr = io::read_json_file(path);
  std::vector<hfm::Schedule> out;
  for (const auto& j : arr) {
    hfm::Schedule s;
    s.horizon = j.at("horizon_days").get<double>() * units::day;
    for (const auto& t : j.at("control_times_days"))
      s.control_times.push_back(t.get<double>() * units::day);
    for (const auto& row : j.at("bhp_psi")) {
      std::vector<double> r;
      for (const auto& v : row) r.push_back(v.get<double>() * units::psi);
      s.bhp.push_back(std::move(r));
    }
    out.push_back(std::move(s));
  }
  return out;
}

double relative_time_integrated_error(const std::vector<double>& delta,
                                      const std::vector<double>& q_hfm,
                                      const std::vector<double>& dts) {
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < delta.size(); ++n) {
    num += std::abs(delta[n]) * dts[n];
    den += q_hfm[n] * dts[n];
  }
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return num / den * 100.0;
}

// ---------------------------------------------------------------------------
// Staged experiment
// ---------------------------------------------------------------------------

namespace {

struct SampleStore {
  // Column schema of the per-sample error/target table.
  static const std::vector<std::string>& target_header() {
    static const std::vector<std::string> h{
        "dp_pa",          "ds",
        "rel_dp",         "rel_dp_valid",
        "rel_ds",         "rel_ds_valid",
        "dq_oil",         "dq_water",
        "rel_dq_oil",     "rel_dq_oil_valid",
        "rel_dq_water",   "rel_dq_water_valid",
        "s_rom",          "s_hfm",
        "label"};
    return h;
  }

  static void write_targets(const fs::path& path,
                            const std::vector<err::SampleErrors>& errors) {
    io::CsvWriter csv(path, target_header());
    for (const auto& e : errors) {
      csv.row({e.dp, e.ds, e.rel_dp, e.rel_dp_valid ? 1.0 : 0.0, e.rel_ds,
               e.rel_ds_valid ? 1.0 : 0.0, e.dq_oil, e.dq_water, e.rel_dq_oil,
               e.rel_dq_oil_valid ? 1.0 : 0.0, e.rel_dq_water,
               e.rel_dq_water_valid ? 1.0 : 0.0, e.s_rom, e.s_hfm,
               static_cast<double>(e.label)});
    }
  }

  static std::vector<err::SampleErrors> read_targets(const fs::path& path) {
    const io::CsvTable t = io::read_csv(path);
    std::vector<err::SampleErrors> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      err::SampleErrors e;
      int k = 0;
      e.dp = t.num(r, k++);
      e.ds = t.num(r, k++);
      e.rel_dp = t.num(r, k++);
      e.rel_dp_valid = t.num(r, k++) != 0.0;
      e.rel_ds = t.num(r, k++);
      e.rel_ds_valid = t.num(r, k++) != 0.0;
      e.dq_oil = t.num(r, k++);
      e.dq_water = t.num(r, k++);
      e.rel_dq_oil = t.num(r, k++);
      e.rel_dq_oil_valid = t.num(r, k++) != 0.0;
      e.rel_dq_water = t.num(r, k++);
      e.rel_dq_water_valid = t.num(r, k++) != 0.0;
      e.s_rom = t.num(r, k++);
      e.s_hfm = t.num(r, k++);
      e.label = static_cast<loc::Category>(static_cast<int>(t.num(r, k++)));
      out.push_back(e);
    }
    return out;
  }
};

std::vector<std::string> masked_names(const feat::FeatureCatalog& catalog,
                                      const std::vector<int>& mask) {
  const auto all = catalog.augmented_names();
  std::vector<std::string> out;
  out.reserve(mask.size());
  for (int idx : mask) out.push_back(all[static_cast<std::size_t>(idx)]);
  return out;
}

void write_feature_csv(const fs::path& path, const Eigen::MatrixXd& x,
                       const std::vector<std::string>& header) {
  io::CsvWriter csv(path, header);
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      row[static_cast<std::size_t>(j)] = x(i, j);
    csv.row(row);
  }
}

}  // namespace

Experiment::Experiment(ExperimentConfig config, fs::path out_dir, bool resume)
    : config_(std::move(config)), out_(std::move(out_dir)), resume_(resume),
      workers_(resolve_workers(config_.workers)) {
  validate_stage_graph();
  fs::create_directories(out_);
  io::write_json_file(out_ / "config.json", config_.to_json());
}

const std::vector<std::string>& Experiment::stage_order() {
  static const std::vector<std::string> order{
      "rom",     "schedules", "split",  "train-runs", "samples", "bundle",
      "predict", "eval-runs", "romes",  "metrics",    "plot-data"};
  return order;
}

const std::map<std::string, std::vector<std::string>>&
Experiment::stage_inputs() {
  static const std::map<std::string, std::vector<std::string>> inputs{
      {"rom", {}},
      {"schedules", {}},
      {"split", {"schedules"}},
      {"train-runs", {"rom", "schedules", "split"}},
      {"samples", {"rom", "schedules", "split", "train-runs"}},
      {"bundle", {"samples"}},
      {"predict", {"rom", "schedules", "split", "bundle"}},
      {"eval-runs", {"rom", "schedules", "split", "predict"}},
      {"romes", {"rom", "schedules", "split", "predict", "eval-runs"}},
      {"metrics",
       {"rom", "schedules", "split", "train-runs", "bundle", "predict",
        "eval-runs"}},
      {"plot-data", {"rom", "schedules", "split", "predict", "eval-runs",
                     "romes", "metrics"}}};
  return inputs;
}

void Experiment::validate_stage_graph() {
  const auto& order = stage_order();
  const auto& inputs = stage_inputs();
  for (std::size_t k = 0; k < order.size(); ++k) {
    for (const auto& in : inputs.at(order[k])) {
      const auto pos = std::find(order.begin(), order.end(), in);
      if (pos == order.end() ||
          static_cast<std::size_t>(pos - order.begin()) >= k)
        throw std::logic_error("stage graph is not topologically ordered");
    }
  }
  // Pipeline hygiene: prediction may not observe test-case high-fidelity
  // data, which only exists downstream (eval-runs, romes).
  for (const auto& in : inputs.at("predict"))
    if (in == "eval-runs" || in == "romes")
      throw std::logic_error("prediction stage must not read test HFM data");
}

bool Experiment::stage_current(const std::string& stage) const {
  const fs::path marker = out_ / "stages" / (stage + ".json");
  if (!fs::exists(marker)) return false;
  io::json j;
  try {
    j = io::read_json_file(marker);
  } catch (...) {
    return false;
  }
  if (j.value("config_hash", std::string{}) != hex64(config_.config_hash()))
    return false;
  for (const auto& in : stage_inputs().at(stage)) {
    const fs::path in_marker = out_ / "stages" / (in + ".json");
    if (!fs::exists(in_marker)) return false;
    const std::string want = j.at("inputs").value(in, std::string{});
    if (want != hex64(io::file_checksum(in_marker))) return false;
  }
  for (const auto& o : j.at("outputs")) {
    const fs::path p = out_ / o.at("path").get<std::string>();
    if (!fs::exists(p)) return false;
    if (hex64(io::file_checksum(p)) != o.at("checksum").get<std::string>())
      return false;
  }
  return true;
}

void Experiment::mark_stage(const std::string& stage) {
  io::json marker;
  marker["config_hash"] = hex64(config_.config_hash());
  marker["master_seed"] = config_.master_seed;
  marker["inputs"] = io::json::object();
  for (const auto& in : stage_inputs().at(stage))
    marker["inputs"][in] =
        hex64(io::file_checksum(out_ / "stages" / (in + ".json")));
  marker["outputs"] = io::json::array();
  std::sort(stage_outputs_.begin(), stage_outputs_.end());
  for (const auto& p : stage_outputs_) {
    marker["outputs"].push_back(
        {{"path", fs::relative(p, out_).generic_string()},
         {"checksum", hex64(io::file_checksum(p))}});
  }
  io::write_json_file(out_ / "stages" / (stage + ".json"), marker);
  stage_outputs_.clear();
  write_manifest();
}

void Experiment::write_manifest() {
  io::json manifest;
  manifest["config_hash"] = hex64(config_.config_hash());
  manifest["master_seed"] = config_.master_seed;
  manifest["config"] = config_.to_json();
  manifest["stages"] = io::json::object();
  for (const auto& stage : stage_order()) {
    const fs::path marker = out_ / "stages" / (stage + ".json");
    if (fs::exists(marker))
      manifest["stages"][stage] = hex64(io::file_checksum(marker));
  }
  io::write_json_file(out_ / "manifest.json", manifest);
}

void Experiment::run_stage(const std::string& stage) {
  if (resume_ && stage_current(stage)) return;
  stage_outputs_.clear();
  if (stage == "rom") stage_rom();
  else if (stage == "schedules") stage_schedules();
  else if (stage == "split") stage_split();
  else if (stage == "train-runs") stage_train_runs();
  else if (stage == "samples") stage_samples();
  else if (stage == "bundle") stage_bundle();
  else if (stage == "predict") stage_predict();
  else if (stage == "eval-runs") stage_eval_runs();
  else if (stage == "romes") stage_romes();
  else if (stage == "metrics") stage_metrics();
  else if (stage == "plot-data") stage_plot_data();
  else throw std::invalid_argument("unknown stage: " + stage);
  mark_stage(stage);
}

void Experiment::run_all() { run_through(stage_order().back()); }

void Experiment::run_through(const std::string& stage) {
  const auto& order = stage_order();
  const auto end = std::find(order.begin(), order.end(), stage);
  if (end == order.end())
    throw std::invalid_argument("unknown stage: " + stage);
  for (auto it = order.begin(); it <= end; ++it) {
    try {
      run_stage(*it);
    } catch (const std::exception& e) {
      throw std::runtime_error("stage '" + *it + "' failed: " + e.what());
    }
  }
}

const hfm::Model& Experiment::model() {
  if (!model_) model_ = config_.build_model();
  return *model_;
}

const rom::PodBasis& Experiment::basis() {
  if (!basis_) basis_ = rom::load_basis(out_ / "rom" / "basis");
  return *basis_;
}

const rom::TpwlOperators& Experiment::ops() {
  if (!ops_) ops_ = rom::load_operators(out_ / "rom" / "operators");
  return *ops_;
}

const std::vector<hfm::Schedule>& Experiment::schedules() {
  if (!schedules_)
    schedules_ = load_schedule_set(out_ / "schedules" / "schedules.json");
  return *schedules_;
}

const SplitIds& Experiment::split() {
  if (!split_) {
    const io::json j = io::read_json_file(out_ / "split" / "split.json");
    SplitIds ids;
    ids.train = j.at("train").get<std::vector<int>>();
    ids.test = j.at("test").get<std::vector<int>>();
    ids.romes = j.at("romes").get<std::vector<int>>();
    split_ = std::move(ids);
  }
  return *split_;
}

const err::ErrorModelBundle& Experiment::bundle() {
  if (!bundle_) bundle_ = err::ErrorModelBundle::load(out_ / "bundle" / "bundle");
  return *bundle_;
}

rom::RomTrajectory Experiment::run_rom_case(int id) {
  return rom::simulate_rom(schedules()[static_cast<std::size_t>(id)], ops(),
                           basis(), model().wells, model().fluid);
}

hfm::HfmTrajectory Experiment::run_hfm_case(int id) {
  std::vector<double> dts;
  dts.reserve(static_cast<std::size_t>(ops().num_steps()));
  for (const auto& rec : ops().records) dts.push_back(rec.dt);

  std::string cache_key;
  if (!hfm_cache_.empty()) {
    // Key on everything the run depends on: the physical model/config, the
    // schedule, and the prescribed grid.
    io::json key_src{{"grid", config_.to_json().at("grid")},
                     {"fluid", config_.to_json().at("fluid")},
                     {"wells", config_.to_json().at("wells")},
                     {"init", config_.to_json().at("init")},
                     {"sim", config_.to_json().at("sim")},
                     {"master_seed", config_.master_seed}};
    const hfm::Schedule& s = schedules()[static_cast<std::size_t>(id)];
    key_src["horizon"] = s.horizon;
    key_src["times"] = s.control_times;
    key_src["bhp"] = s.bhp;
    key_src["dts"] = dts;
    std::uint64_t h = fnv1a64(key_src.dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    cache_key = buf;
    if (fs::exists(hfm_cache_ / (cache_key + "_series.csv")))
      return load_trajectory(hfm_cache_, cache_key, model().wells);
  }

  hfm::HfmTrajectory traj = hfm::simulate_hfm_on_grid(
      model(), schedules()[static_cast<std::size_t>(id)],
      config_.initial_state(model().grid), dts, config_.sim_options());
  if (!cache_key.empty()) {
    fs::create_directories(hfm_cache_);
    save_trajectory(hfm_cache_, cache_key, traj, model().wells);
  }
  return traj;
}

void Experiment::stage_rom() {
  const hfm::Model& m = model();
  hfm::SimOptions opts = config_.sim_options();
  opts.store_jacobians = false;

  // Snap the adaptive training grids to both the training-period and the
  // test-period boundaries so paired runs never straddle a control change.
  const int test_periods = std::max(
      1, static_cast<int>(std::round(config_.horizon_days /
                                     config_.test_period_days)));
  for (int k = 1; k <= test_periods; ++k)
    opts.extra_snap_times.push_back(config_.horizon_days * units::day * k /
                                    test_periods);

  std::vector<hfm::HfmTrajectory> runs(
      static_cast<std::size_t>(config_.n_tpwl_runs));
  std::vector<hfm::Schedule> training_schedules;
  for (int k = 0; k < config_.n_tpwl_runs; ++k)
    training_schedules.push_back(config_.tpwl_training_schedule(k));

  parallel_for(runs.size(), workers_, [&](std::size_t k) {
    hfm::SimOptions run_opts = opts;
    run_opts.store_jacobians = k == 0;  // only the primary run feeds TPWL
    runs[k] = hfm::simulate_hfm(m, training_schedules[k],
                                config_.initial_state(m.grid), run_opts);
  });

  std::vector<const hfm::HfmTrajectory*> ptrs;
  for (const auto& r : runs) ptrs.push_back(&r);
  const rom::PodBasis pod = rom::build_pod_basis(
      ptrs, config_.num_pressure_modes, config_.num_saturation_modes,
      config_.pressure_scale_psi * units::psi);
  const rom::TpwlOperators tpwl =
      rom::precompute_operators(runs[0], training_schedules[0], pod, m);

  const fs::path dir = out_ / "rom";
  fs::create_directories(dir);
  for (int k = 0; k < config_.n_tpwl_runs; ++k) {
    const std::string stem = "tpwl_run_" + std::to_string(k);
    hfm::HfmTrajectory slim = runs[static_cast<std::size_t>(k)];
    slim.jac_records.clear();
    save_trajectory(dir, stem, slim, m.wells);
    stage_outputs_.push_back(dir / (stem + "_states.bin"));
    stage_outputs_.push_back(dir / (stem + "_states.json"));
    stage_outputs_.push_back(dir / (stem + "_series.csv"));
  }
  save_schedule_set(dir / "training_schedules.json", training_schedules);
  rom::save_basis(dir / "basis", pod);
  rom::save_operators(dir / "operators", tpwl);
  io::save_vector(dir / "permeability", m.grid.perm, "permeability", "m2");
  for (const char* f : {"training_schedules.json", "basis.bin", "basis.json",
                        "operators.bin", "operators.json", "permeability.bin",
                        "permeability.json"})
    stage_outputs_.push_back(dir / f);

  basis_ = pod;
  ops_ = tpwl;
}

void Experiment::stage_schedules() {
  const hfm::Schedule primary = config_.tpwl_training_schedule(0);
  const auto all = generate_schedules(
      primary, model().wells, config_.n_bhp, config_.perturb_amplitude,
      config_.bhp_spread_pa(), config_.test_period_days * units::day,
      derive_seed(config_.master_seed, "test-schedules"));

  const fs::path dir = out_ / "schedules";
  save_schedule_set(dir / "schedules.json", all);
  io::CsvWriter csv(dir / "perturbations.csv", {"id", "du_p", "du_i"});
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto [du_p, du_i] =
        perturbation_metrics(all[i], primary, model().wells);
    csv.row({static_cast<double>(i), du_p, du_i});
  }
  stage_outputs_.push_back(dir / "schedules.json");
  stage_outputs_.push_back(dir / "perturbations.csv");
  schedules_ = all;
}

void Experiment::stage_split() {
  const io::CsvTable table =
      io::read_csv(out_ / "schedules" / "perturbations.csv");
  std::vector<std::pair<double, double>> perts;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    perts.emplace_back(table.num(r, 1), table.num(r, 2));
  const SplitIds ids =
      split_train_test(perts, config_.n_train, config_.n_romes,
                       derive_seed(config_.master_seed, "split"));
  io::write_json_file(out_ / "split" / "split.json",
                      {{"train", ids.train},
                       {"test", ids.test},
                       {"romes", ids.romes}});
  stage_outputs_.push_back(out_ / "split" / "split.json");
  split_ = ids;
}

void Experiment::stage_train_runs() {
  const auto& ids = split().train;
  const fs::path dir = out_ / "runs";
  fs::create_directories(dir);
  parallel_for(ids.size(), workers_, [&](std::size_t k) {
    const int id = ids[k];
    const hfm::HfmTrajectory traj = run_hfm_case(id);
    save_trajectory(dir, "case_" + std::to_string(id), traj, model().wells);
  });
  for (int id : ids) {
    const std::string stem = "case_" + std::to_string(id);
    stage_outputs_.push_back(dir / (stem + "_states.bin"));
    stage_outputs_.push_back(dir / (stem + "_states.json"));
    stage_outputs_.push_back(dir / (stem + "_series.csv"));
  }
}

void Experiment::stage_samples() {
  const auto& ids = split().train;
  std::vector<rom::RomTrajectory> roms(ids.size());
  std::vector<hfm::HfmTrajectory> hfms(ids.size());
  parallel_for(ids.size(), workers_, [&](std::size_t k) {
    roms[k] = run_rom_case(ids[k]);
    hfms[k] = load_trajectory(out_ / "runs", "case_" + std::to_string(ids[k]),
                              model().wells);
  });
  std::vector<const rom::RomTrajectory*> rom_ptrs;
  std::vector<const hfm::HfmTrajectory*> hfm_ptrs;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    rom_ptrs.push_back(&roms[k]);
    hfm_ptrs.push_back(&hfms[k]);
  }
  const err::TrainingSampleSet set = err::assemble_training_set(
      rom_ptrs, hfm_ptrs, ops(), basis(), model().wells, config_.emml);

  const fs::path dir = out_ / "samples";
  fs::create_directories(dir);
  io::write_json_file(dir / "mask.json",
                      {{"mask", set.mask},
                       {"tau", set.catalog.memory},
                       {"catalog", set.catalog.names},
                       {"producer_wells", set.producer_wells},
                       {"injector_wells", set.injector_wells},
                       {"samples_per_run", set.samples_per_run}});
  stage_outputs_.push_back(dir / "mask.json");

  const auto feature_names = masked_names(set.catalog, set.mask);
  const auto cls_names = feat::classification_feature_names(model().wells);
  for (std::size_t p = 0; p < set.producers.size(); ++p) {
    const std::string stem = "producer_" + std::to_string(p);
    io::save_matrix(dir / (stem + "_x"), set.producers[p].x, feature_names);
    write_feature_csv(dir / (stem + "_x.csv"), set.producers[p].x,
                      feature_names);
    io::save_matrix(dir / (stem + "_cls"), set.producers[p].cls, cls_names);
    SampleStore::write_targets(dir / (stem + "_targets.csv"),
                               set.producers[p].errors);
    for (const std::string suffix :
         {"_x.bin", "_x.json", "_x.csv", "_cls.bin", "_cls.json",
          "_targets.csv"})
      stage_outputs_.push_back(dir / (stem + suffix));
  }
  io::save_matrix(dir / "injector_x", set.injectors.x, feature_names);
  write_feature_csv(dir / "injector_x.csv", set.injectors.x, feature_names);
  SampleStore::write_targets(dir / "injector_targets.csv",
                             set.injectors.errors);
  for (const char* f :
       {"injector_x.bin", "injector_x.json", "injector_x.csv",
        "injector_targets.csv"})
    stage_outputs_.push_back(dir / f);
}

void Experiment::stage_bundle() {
  // Reload the frozen sample set from the samples stage.
  const fs::path dir = out_ / "samples";
  const io::json mask_info = io::read_json_file(dir / "mask.json");
  err::TrainingSampleSet set;
  set.mask = mask_info.at("mask").get<std::vector<int>>();
  set.catalog.names = mask_info.at("catalog").get<std::vector<std::string>>();
  set.catalog.memory = mask_info.at("tau");
  set.producer_wells = mask_info.at("producer_wells").get<std::vector<int>>();
  set.injector_wells = mask_info.at("injector_wells").get<std::vector<int>>();
  set.samples_per_run = mask_info.at("samples_per_run");
  set.producers.resize(set.producer_wells.size());
  for (std::size_t p = 0; p < set.producers.size(); ++p) {
    const std::string stem = "producer_" + std::to_string(p);
    set.producers[p].x = io::load_matrix(dir / (stem + "_x"));
    set.producers[p].cls = io::load_matrix(dir / (stem + "_cls"));
    set.producers[p].errors =
        SampleStore::read_targets(dir / (stem + "_targets.csv"));
    for (const auto& e : set.producers[p].errors)
      set.producers[p].labels.push_back(static_cast<int>(e.label));
  }
  set.injectors.x = io::load_matrix(dir / "injector_x");
  set.injectors.errors = SampleStore::read_targets(dir / "injector_targets.csv");

  const err::ErrorModelBundle trained = err::train_bundle(
      set, config_.emml, derive_seed(config_.master_seed, "bundle"), workers_);
  fs::create_directories(out_ / "bundle");
  trained.save(out_ / "bundle" / "bundle");
  stage_outputs_.push_back(out_ / "bundle" / "bundle.bin");
  stage_outputs_.push_back(out_ / "bundle" / "bundle.json");
  bundle_ = trained;
}

void Experiment::stage_predict() {
  const fs::path dir = out_ / "predictions";
  fs::create_directories(dir);
  const auto& wells = model().wells;
  const err::ErrorModelBundle& b = bundle();

  std::vector<int> all_ids(static_cast<std::size_t>(config_.n_bhp));
  for (int i = 0; i < config_.n_bhp; ++i)
    all_ids[static_cast<std::size_t>(i)] = i;

  parallel_for(all_ids.size(), workers_, [&](std::size_t k) {
    const int id = all_ids[k];
    const rom::RomTrajectory ro = run_rom_case(id);
    const err::CasePrediction pred =
        err::predict_case(b, ro, ops(), basis(), wells, model().fluid);

    std::vector<std::string> header{"time_days", "dt_days"};
    for (const auto& w : wells) {
      if (w.kind == hfm::WellKind::Producer) {
        header.push_back("qo_rom[" + w.name + "]");
        header.push_back("qo_corr[" + w.name + "]");
        header.push_back("do_hat[" + w.name + "]");
      }
      header.push_back("qw_rom[" + w.name + "]");
      header.push_back("qw_corr[" + w.name + "]");
      header.push_back("dw_hat[" + w.name + "]");
    }
    for (int p : b.producer_wells)
      header.push_back("region[" + wells[static_cast<std::size_t>(p)].name +
                       "]");
    io::CsvWriter csv(dir / ("case_" + std::to_string(id) + ".csv"), header);
    for (int n = 0; n < ro.num_steps(); ++n) {
      std::vector<double> row{ro.steps[static_cast<std::size_t>(n)].t /
                                  units::day,
                              ro.steps[static_cast<std::size_t>(n)].dt /
                                  units::day};
      for (std::size_t w = 0; w < wells.size(); ++w) {
        const auto& q_rom = ro.qoi[static_cast<std::size_t>(n)][w];
        const auto& q_cor = pred.corrected[static_cast<std::size_t>(n)][w];
        const auto& d_hat = pred.delta[static_cast<std::size_t>(n)][w];
        if (wells[w].kind == hfm::WellKind::Producer) {
          row.push_back(q_rom.oil * units::day);
          row.push_back(q_cor.oil * units::day);
          row.push_back(d_hat.oil * units::day);
        }
        row.push_back(q_rom.water * units::day);
        row.push_back(q_cor.water * units::day);
        row.push_back(d_hat.water * units::day);
      }
      for (std::size_t p = 0; p < b.producer_wells.size(); ++p)
        row.push_back(static_cast<double>(
            pred.producer_region[static_cast<std::size_t>(n)][p]));
      csv.row(row);
    }
  });
  for (int id : all_ids)
    stage_outputs_.push_back(dir / ("case_" + std::to_string(id) + ".csv"));
}

void Experiment::stage_eval_runs() {
  const auto& ids = split().test;
  const fs::path dir = out_ / "runs";
  fs::create_directories(dir);
  parallel_for(ids.size(), workers_, [&](std::size_t k) {
    const int id = ids[k];
    const hfm::HfmTrajectory traj = run_hfm_case(id);
    save_trajectory(dir, "case_" + std::to_string(id), traj, model().wells);
  });
  for (int id : ids) {
    const std::string stem = "case_" + std::to_string(id);
    stage_outputs_.push_back(dir / (stem + "_states.bin"));
    stage_outputs_.push_back(dir / (stem + "_states.json"));
    stage_outputs_.push_back(dir / (stem + "_series.csv"));
  }
}

namespace {

// Everything metric evaluation needs for one case, on the shared grid.
struct CaseSeries {
  std::vector<double> dts;  // seconds
  // Per metric slot: per (well-in-set, step) series flattened by well.
  std::vector<std::vector<std::vector<double>>> q_hfm;   // [metric][well][step]
  std::vector<std::vector<std::vector<double>>> q_rom;
  std::vector<std::vector<std::vector<double>>> d_true;
  std::vector<std::vector<std::vector<double>>> d_hat;
};

struct PredictionTable {
  io::CsvTable table;
  int steps() const { return static_cast<int>(table.rows.size()); }
  double value(int step, const std::string& column) const {
    const int c = table.column(column);
    if (c < 0) throw std::runtime_error("prediction column missing: " + column);
    return table.num(static_cast<std::size_t>(step), c);
  }
};

CaseSeries build_case_series(const hfm::HfmTrajectory& hf,
                             const rom::RomTrajectory& ro,
                             const PredictionTable& pred,
                             const std::vector<hfm::WellSpec>& wells) {
  CaseSeries cs;
  const int n_steps = ro.num_steps();
  cs.dts.reserve(static_cast<std::size_t>(n_steps));
  for (const auto& step : ro.steps) cs.dts.push_back(step.dt);
  cs.q_hfm.resize(kNumMetrics);
  cs.q_rom.resize(kNumMetrics);
  cs.d_true.resize(kNumMetrics);
  cs.d_hat.resize(kNumMetrics);

  for (std::size_t w = 0; w < wells.size(); ++w) {
    const bool producer = wells[w].kind == hfm::WellKind::Producer;
    const std::vector<int> slots =
        producer ? std::vector<int>{0, 1} : std::vector<int>{2};
    for (int metric : slots) {
      const bool oil = metric == 0;
      std::vector<double> qh(static_cast<std::size_t>(n_steps));
      std::vector<double> qr(static_cast<std::size_t>(n_steps));
      std::vector<double> dt_series(static_cast<std::size_t>(n_steps));
      std::vector<double> dh(static_cast<std::size_t>(n_steps));
      const std::string hat_col =
          (oil ? "do_hat[" : "dw_hat[") + wells[w].name + "]";
      for (int n = 0; n < n_steps; ++n) {
        const auto& h = hf.qoi[static_cast<std::size_t>(n)][w];
        const auto& r = ro.qoi[static_cast<std::size_t>(n)][w];
        qh[static_cast<std::size_t>(n)] = oil ? h.oil : h.water;
        qr[static_cast<std::size_t>(n)] = oil ? r.oil : r.water;
        dt_series[static_cast<std::size_t>(n)] =
            qh[static_cast<std::size_t>(n)] - qr[static_cast<std::size_t>(n)];
        dh[static_cast<std::size_t>(n)] =
            pred.value(n, hat_col) / units::day;
      }
      cs.q_hfm[static_cast<std::size_t>(metric)].push_back(std::move(qh));
      cs.q_rom[static_cast<std::size_t>(metric)].push_back(std::move(qr));
      cs.d_true[static_cast<std::size_t>(metric)].push_back(
          std::move(dt_series));
      cs.d_hat[static_cast<std::size_t>(metric)].push_back(std::move(dh));
    }
  }
  return cs;
}

// Eq.-39-style relative time-integrated errors plus the h-bar pair for the
// ROMES workflow; wells with no flow over the horizon are skipped.
void case_metrics_from_series(const CaseSeries& cs, CaseMetrics& cm) {
  for (int m = 0; m < kNumMetrics; ++m) {
    std::vector<double> e_rl_terms, e_corr_terms, h_true_terms, h_hat_terms;
    const auto& wells_q = cs.q_hfm[static_cast<std::size_t>(m)];
    for (std::size_t w = 0; w < wells_q.size(); ++w) {
      const auto& qh = cs.q_hfm[static_cast<std::size_t>(m)][w];
      const auto& qr = cs.q_rom[static_cast<std::size_t>(m)][w];
      const auto& dt_true = cs.d_true[static_cast<std::size_t>(m)][w];
      const auto& dh = cs.d_hat[static_cast<std::size_t>(m)][w];

      const double e_rl = relative_time_integrated_error(dt_true, qh, cs.dts);
      if (std::isnan(e_rl)) continue;
      std::vector<double> resid(dt_true.size());
      for (std::size_t n = 0; n < resid.size(); ++n)
        resid[n] = dh[n] - dt_true[n];
      const double e_corr = relative_time_integrated_error(resid, qh, cs.dts);
      e_rl_terms.push_back(e_rl);
      e_corr_terms.push_back(e_corr);

      const auto h_true = gp::time_integrated_error(dt_true, qr, cs.dts);
      const auto h_hat = gp::time_integrated_error(dh, qr, cs.dts);
      if (!h_true.degenerate && !h_hat.degenerate) {
        h_true_terms.push_back(h_true.value);
        h_hat_terms.push_back(h_hat.value);
      }
    }
    if (!e_rl_terms.empty()) {
      cm.e_rl[m] = gp::averaged_error(e_rl_terms) / 100.0;  // already percent
      cm.e_corr[m] = gp::averaged_error(e_corr_terms) / 100.0;
    }
    if (!h_true_terms.empty()) {
      cm.true_h[m] = gp::averaged_error(h_true_terms);
      cm.indicator[m] = gp::averaged_error(h_hat_terms);
    }
  }
}

}  // namespace

void Experiment::stage_romes() {
  const auto& ids = split().romes;
  const auto& wells = model().wells;
  fs::create_directories(out_ / "romes");

  std::vector<std::array<double, kNumMetrics>> indicator(ids.size());
  std::vector<std::array<double, kNumMetrics>> truth(ids.size());
  parallel_for(ids.size(), workers_, [&](std::size_t k) {
    const int id = ids[k];
    const hfm::HfmTrajectory hf =
        load_trajectory(out_ / "runs", "case_" + std::to_string(id), wells);
    const rom::RomTrajectory ro = run_rom_case(id);
    PredictionTable pred{io::read_csv(out_ / "predictions" /
                                      ("case_" + std::to_string(id) + ".csv"))};
    const CaseSeries cs = build_case_series(hf, ro, pred, wells);
    CaseMetrics cm;
    case_metrics_from_series(cs, cm);
    for (int m = 0; m < kNumMetrics; ++m) {
      indicator[k][static_cast<std::size_t>(m)] = cm.indicator[m];
      truth[k][static_cast<std::size_t>(m)] = cm.true_h[m];
    }
  });

  io::CsvWriter pairs(out_ / "romes" / "pairs.csv",
                      {"case_id", "metric", "indicator", "true_h"});
  io::BlobWriter gp_store(out_ / "romes" / "gp");
  for (int m = 0; m < kNumMetrics; ++m) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(ids.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) {
      x[static_cast<Eigen::Index>(k)] = indicator[k][static_cast<std::size_t>(m)];
      y[static_cast<Eigen::Index>(k)] = truth[k][static_cast<std::size_t>(m)];
      pairs.row_mixed({std::to_string(ids[k]), kMetricNames[m],
                       io::CsvWriter::format(x[static_cast<Eigen::Index>(k)]),
                       io::CsvWriter::format(y[static_cast<Eigen::Index>(k)])});
    }
    const gp::GpModel gp_model = gp::GpModel::fit(x, y);
    gp_model.save(gp_store, kMetricNames[m]);
  }
  gp_store.finish();
  stage_outputs_.push_back(out_ / "romes" / "pairs.csv");
  stage_outputs_.push_back(out_ / "romes" / "gp.bin");
  stage_outputs_.push_back(out_ / "romes" / "gp.json");
}

void Experiment::stage_metrics() {
  const auto& wells = model().wells;
  const io::CsvTable perts =
      io::read_csv(out_ / "schedules" / "perturbations.csv");
  const SplitIds& ids = split();
  const bool classify =
      config_.emml.locality == err::LocalityKind::Classification;

  std::vector<int> all = ids.train;
  all.insert(all.end(), ids.test.begin(), ids.test.end());
  std::sort(all.begin(), all.end());

  std::vector<CaseMetrics> cases(all.size());
  parallel_for(all.size(), workers_, [&](std::size_t k) {
    const int id = all[k];
    CaseMetrics& cm = cases[k];
    cm.id = id;
    const bool is_train =
        std::find(ids.train.begin(), ids.train.end(), id) != ids.train.end();
    const bool is_romes =
        std::find(ids.romes.begin(), ids.romes.end(), id) != ids.romes.end();
    cm.split = is_train ? "train" : is_romes ? "romes" : "test";
    cm.du_p = perts.num(static_cast<std::size_t>(id), 1);
    cm.du_i = perts.num(static_cast<std::size_t>(id), 2);

    const hfm::HfmTrajectory hf =
        load_trajectory(out_ / "runs", "case_" + std::to_string(id), wells);
    const rom::RomTrajectory ro = run_rom_case(id);
    PredictionTable pred{io::read_csv(out_ / "predictions" /
                                      ("case_" + std::to_string(id) + ".csv"))};
    const CaseSeries cs = build_case_series(hf, ro, pred, wells);
    case_metrics_from_series(cs, cm);

    if (classify) {
      int mis = 0, total = 0;
      int slot = 0;
      for (std::size_t w = 0; w < wells.size(); ++w) {
        if (wells[w].kind != hfm::WellKind::Producer) continue;
        const std::string col = "region[" + wells[w].name + "]";
        for (int n = 0; n < ro.num_steps(); ++n) {
          const double s_rom =
              ro.well_states(n, 2 * static_cast<int>(w) + 1);
          const double s_hfm =
              hf.states[static_cast<std::size_t>(n + 1)].saturation(
                  wells[w].cell);
          const int truth = static_cast<int>(loc::assign_category(
              s_rom, s_hfm, config_.emml.eps_a, config_.emml.eps_c));
          const int predicted = static_cast<int>(pred.value(n, col));
          if (predicted != truth) ++mis;
          ++total;
        }
        ++slot;
      }
      cm.misclass = total > 0 ? static_cast<double>(mis) / total : 0.0;
    }
  });

  MetricsReport report;
  report.cases = cases;
  std::vector<double> rl[kNumMetrics], corr[kNumMetrics];
  double mis_sum = 0.0;
  int n_test = 0;
  for (const auto& cm : cases) {
    if (cm.split == "train") continue;
    ++n_test;
    mis_sum += cm.misclass;
    for (int m = 0; m < kNumMetrics; ++m) {
      rl[m].push_back(cm.e_rl[m]);
      corr[m].push_back(cm.e_corr[m]);
      ++report.total_pairs;
      if (cm.e_corr[m] < cm.e_rl[m]) ++report.improved_pairs;
    }
  }
  for (int m = 0; m < kNumMetrics; ++m) {
    report.median_e_rl[m] = median(rl[m]);
    report.median_e_corr[m] = median(corr[m]);
  }
  report.misclassification_rate = n_test > 0 ? mis_sum / n_test : 0.0;

  const fs::path dir = out_ / "metrics";
  fs::create_directories(dir);
  std::vector<std::string> header{"id", "split", "du_p", "du_i"};
  for (int m = 0; m < kNumMetrics; ++m) {
    header.push_back(std::string("e_rl_") + kMetricNames[m]);
    header.push_back(std::string("e_corr_") + kMetricNames[m]);
    header.push_back(std::string("h_ind_") + kMetricNames[m]);
    header.push_back(std::string("h_true_") + kMetricNames[m]);
  }
  header.push_back("misclass");
  io::CsvWriter csv(dir / "cases.csv", header);
  for (const auto& cm : cases) {
    std::vector<std::string> row{std::to_string(cm.id), cm.split,
                                 io::CsvWriter::format(cm.du_p),
                                 io::CsvWriter::format(cm.du_i)};
    for (int m = 0; m < kNumMetrics; ++m) {
      row.push_back(io::CsvWriter::format(cm.e_rl[m]));
      row.push_back(io::CsvWriter::format(cm.e_corr[m]));
      row.push_back(io::CsvWriter::format(cm.indicator[m]));
      row.push_back(io::CsvWriter::format(cm.true_h[m]));
    }
    row.push_back(io::CsvWriter::format(cm.misclass));
    csv.row_mixed(row);
  }

  io::json summary;
  for (int m = 0; m < kNumMetrics; ++m) {
    summary["median_e_rl"][kMetricNames[m]] = report.median_e_rl[m];
    summary["median_e_corr"][kMetricNames[m]] = report.median_e_corr[m];
  }
  summary["misclassification_rate"] = report.misclassification_rate;
  summary["improved_pairs"] = report.improved_pairs;
  summary["total_pairs"] = report.total_pairs;
  io::write_json_file(dir / "summary.json", summary);
  stage_outputs_.push_back(dir / "cases.csv");
  stage_outputs_.push_back(dir / "summary.json");
}

void Experiment::stage_plot_data() {
  const fs::path dir = out_ / "plot";
  fs::create_directories(dir);
  const MetricsReport report = read_metrics();
  const auto& wells = model().wells;

  // Per-case time-integrated errors, sorted by the surrogate error.
  for (int m = 0; m < kNumMetrics; ++m) {
    std::vector<const CaseMetrics*> ordered;
    for (const auto& cm : report.cases) ordered.push_back(&cm);
    std::sort(ordered.begin(), ordered.end(),
              [m](const CaseMetrics* a, const CaseMetrics* b) {
                return a->e_rl[m] != b->e_rl[m] ? a->e_rl[m] < b->e_rl[m]
                                                : a->id < b->id;
              });
    io::CsvWriter csv(dir / (std::string("sorted_errors_") + kMetricNames[m] +
                             ".csv"),
                      {"rank", "id", "split", "e_rl", "e_corr"});
    int rank = 0;
    for (const CaseMetrics* cm : ordered)
      csv.row_mixed({std::to_string(rank++), std::to_string(cm->id), cm->split,
                     io::CsvWriter::format(cm->e_rl[m]),
                     io::CsvWriter::format(cm->e_corr[m])});
    stage_outputs_.push_back(dir / (std::string("sorted_errors_") +
                                    kMetricNames[m] + ".csv"));
  }

  // Indicator-vs-true scatter with the GP band per metric.
  const io::BlobReader gp_store(out_ / "romes" / "gp");
  const auto& romes_ids = split().romes;
  for (int m = 0; m < kNumMetrics; ++m) {
    const gp::GpModel gp_model = gp::GpModel::load(gp_store, kMetricNames[m]);
    io::CsvWriter csv(
        dir / (std::string("romes_") + kMetricNames[m] + ".csv"),
        {"kind", "id", "indicator", "true_h", "gp_mean", "lo90", "hi90"});
    double lo = 1.0e300, hi = -1.0e300;
    for (const auto& cm : report.cases) {
      if (cm.split == "train") continue;
      lo = std::min(lo, cm.indicator[m]);
      hi = std::max(hi, cm.indicator[m]);
    }
    for (int k = 0; k < 60; ++k) {
      const double x = lo + (hi - lo) * k / 59.0;
      const auto p = gp_model.predict(x);
      const auto [lo90, hi90] = gp::confidence_interval(p.mean, p.variance);
      csv.row_mixed({"band", "-1", io::CsvWriter::format(x), "0",
                     io::CsvWriter::format(p.mean),
                     io::CsvWriter::format(lo90), io::CsvWriter::format(hi90)});
    }
    for (const auto& cm : report.cases) {
      if (cm.split == "train") continue;
      const bool in_training =
          std::find(romes_ids.begin(), romes_ids.end(), cm.id) !=
          romes_ids.end();
      const auto p = gp_model.predict(cm.indicator[m]);
      const auto [lo90, hi90] = gp::confidence_interval(p.mean, p.variance);
      csv.row_mixed({in_training ? "fit_point" : "test_point",
                     std::to_string(cm.id),
                     io::CsvWriter::format(cm.indicator[m]),
                     io::CsvWriter::format(cm.true_h[m]),
                     io::CsvWriter::format(p.mean), io::CsvWriter::format(lo90),
                     io::CsvWriter::format(hi90)});
    }
    stage_outputs_.push_back(dir /
                             (std::string("romes_") + kMetricNames[m] + ".csv"));
  }

  // Time series for the 10th/50th/90th percentile test cases by oil error.
  std::vector<const CaseMetrics*> test_cases;
  for (const auto& cm : report.cases)
    if (cm.split != "train") test_cases.push_back(&cm);
  std::sort(test_cases.begin(), test_cases.end(),
            [](const CaseMetrics* a, const CaseMetrics* b) {
              return a->e_rl[0] < b->e_rl[0];
            });
  std::vector<int> percentile_ids;
  if (!test_cases.empty()) {
    for (double f : {0.1, 0.5, 0.9}) {
      const auto idx = static_cast<std::size_t>(
          f * static_cast<double>(test_cases.size() - 1));
      percentile_ids.push_back(test_cases[idx]->id);
    }
  }
  for (int id : percentile_ids) {
    const hfm::HfmTrajectory hf =
        load_trajectory(out_ / "runs", "case_" + std::to_string(id), wells);
    const rom::RomTrajectory ro = run_rom_case(id);
    PredictionTable pred{io::read_csv(out_ / "predictions" /
                                      ("case_" + std::to_string(id) + ".csv"))};
    std::vector<std::string> header{"time_days"};
    for (const auto& w : wells) {
      if (w.kind == hfm::WellKind::Producer) {
        header.push_back("qo_hfm[" + w.name + "]");
        header.push_back("qo_rom[" + w.name + "]");
        header.push_back("qo_corr[" + w.name + "]");
      }
      header.push_back("qw_hfm[" + w.name + "]");
      header.push_back("qw_rom[" + w.name + "]");
      header.push_back("qw_corr[" + w.name + "]");
      header.push_back("wb_p_hfm[" + w.name + "]");
      header.push_back("wb_p_rom[" + w.name + "]");
      header.push_back("wb_s_hfm[" + w.name + "]");
      header.push_back("wb_s_rom[" + w.name + "]");
    }
    io::CsvWriter csv(dir / ("timeseries_case_" + std::to_string(id) + ".csv"),
                      header);
    for (int n = 0; n < ro.num_steps(); ++n) {
      std::vector<double> row{ro.steps[static_cast<std::size_t>(n)].t /
                              units::day};
      for (std::size_t w = 0; w < wells.size(); ++w) {
        const auto& h = hf.qoi[static_cast<std::size_t>(n)][w];
        const auto& r = ro.qoi[static_cast<std::size_t>(n)][w];
        if (wells[w].kind == hfm::WellKind::Producer) {
          row.push_back(h.oil * units::day);
          row.push_back(r.oil * units::day);
          row.push_back(pred.value(n, "qo_corr[" + wells[w].name + "]"));
        }
        row.push_back(h.water * units::day);
        row.push_back(r.water * units::day);
        row.push_back(pred.value(n, "qw_corr[" + wells[w].name + "]"));
        row.push_back(
            hf.states[static_cast<std::size_t>(n + 1)].pressure(wells[w].cell) /
            units::psi);
        row.push_back(ro.well_states(n, 2 * static_cast<int>(w)) / units::psi);
        row.push_back(
            hf.states[static_cast<std::size_t>(n + 1)].saturation(
                wells[w].cell));
        row.push_back(ro.well_states(n, 2 * static_cast<int>(w) + 1));
      }
      csv.row(row);
    }
    stage_outputs_.push_back(dir /
                             ("timeseries_case_" + std::to_string(id) + ".csv"));
  }
}

MetricsReport Experiment::read_metrics() const {
  MetricsReport report;
  const io::CsvTable table = io::read_csv(out_ / "metrics" / "cases.csv");
  const io::json summary =
      io::read_json_file(out_ / "metrics" / "summary.json");

  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    CaseMetrics cm;
    cm.id = static_cast<int>(table.num(i, 0));
    cm.split = table.cell(i, 1);
    cm.du_p = table.num(i, 2);
    cm.du_i = table.num(i, 3);
    for (int m = 0; m < kNumMetrics; ++m) {
      cm.e_rl[m] = table.num(i, 4 + 4 * m);
      cm.e_corr[m] = table.num(i, 5 + 4 * m);
      cm.indicator[m] = table.num(i, 6 + 4 * m);
      cm.true_h[m] = table.num(i, 7 + 4 * m);
    }
    cm.misclass = table.num(i, static_cast<int>(table.header.size()) - 1);
    report.cases.push_back(std::move(cm));
  }
  for (int m = 0; m < kNumMetrics; ++m) {
    report.median_e_rl[m] = summary.at("median_e_rl").at(kMetricNames[m]);
    report.median_e_corr[m] = summary.at("median_e_corr").at(kMetricNames[m]);
  }
  report.misclassification_rate = summary.at("misclassification_rate");
  report.improved_pairs = summary.at("improved_pairs");
  report.total_pairs = summary.at("total_pairs");
  return report;
}

}  // namespace emlab::pipe
