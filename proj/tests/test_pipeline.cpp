#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "emlab/pipeline.hpp"
#include "test_support.hpp"

using namespace emlab;
using namespace emlab::pipe;
using emlab::testing::stepped_schedule;
using emlab::testing::tiny_model;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig smoke_config() {
  return ExperimentConfig::load(fs::path(EMLAB_SOURCE_DIR) / "configs" /
                                "smoke.json");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("schedule generation respects amplitude and seeds") {
  auto model = tiny_model(5, 5);
  const hfm::Schedule primary =
      stepped_schedule(200.0, {2700.0, 2720.0}, {3300.0, 3280.0});

  SUBCASE("zero amplitude copies the primary profile") {
    const auto set = generate_schedules(primary, model.wells, 4, 0.0, 1.0e6,
                                        100.0 * units::day, 11);
    REQUIRE(set.size() == 4);
    for (const auto& s : set)
      for (std::size_t k = 0; k < s.bhp.size(); ++k) {
        const double mid = (static_cast<double>(k) + 0.5) * s.horizon /
                           static_cast<double>(s.bhp.size());
        const Eigen::VectorXd base = primary.controls_at(mid);
        for (std::size_t w = 0; w < s.bhp[k].size(); ++w)
          CHECK(s.bhp[k][w] == base[static_cast<Eigen::Index>(w)]);
      }
  }

  SUBCASE("fixed seed reproduces the set bit-identically") {
    const auto a = generate_schedules(primary, model.wells, 6, 0.3, 1.0e6,
                                      80.0 * units::day, 42);
    const auto b = generate_schedules(primary, model.wells, 6, 0.3, 1.0e6,
                                      80.0 * units::day, 42);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i].bhp == b[i].bhp);
  }

  SUBCASE("injectors always stay above producers") {
    const auto set = generate_schedules(primary, model.wells, 20, 0.45, 4.0e6,
                                        80.0 * units::day, 5);
    for (const auto& s : set)
      for (const auto& row : s.bhp) CHECK(row[1] > row[0]);
  }
}

TEST_CASE("perturbation metrics closed forms") {
  auto model = tiny_model(5, 5);
  const hfm::Schedule primary =
      stepped_schedule(200.0, {2700.0, 2650.0}, {3300.0, 3350.0});

  SUBCASE("identical schedules give zero") {
    const auto [p, i] = perturbation_metrics(primary, primary, model.wells);
    CHECK(p == 0.0);
    CHECK(i == 0.0);
  }

  SUBCASE("constant relative offset on producers only") {
    hfm::Schedule shifted = primary;
    const double c = 0.04;
    for (auto& row : shifted.bhp) row[0] *= 1.0 + c;
    const auto [p, i] = perturbation_metrics(shifted, primary, model.wells);
    CHECK(p == doctest::Approx(c).epsilon(1e-12));
    CHECK(i == doctest::Approx(0.0));
  }
}

TEST_CASE("train/test split partitions the schedule set") {
  Rng rng(derive_seed(5, "split-test"));
  std::vector<std::pair<double, double>> perts;
  for (int i = 0; i < 30; ++i)
    perts.emplace_back(rng.uniform(0.0, 1.0), rng.uniform(0.0, 0.5));

  const SplitIds ids = split_train_test(perts, 8, 5, 99);
  CHECK(ids.train.size() == 8);
  CHECK(ids.test.size() == 22);
  CHECK(ids.romes.size() == 5);

  std::vector<int> joined = ids.train;
  joined.insert(joined.end(), ids.test.begin(), ids.test.end());
  std::sort(joined.begin(), joined.end());
  for (int i = 0; i < 30; ++i) CHECK(joined[static_cast<std::size_t>(i)] == i);
  for (int id : ids.romes)
    CHECK(std::find(ids.test.begin(), ids.test.end(), id) != ids.test.end());

  SUBCASE("n_train = n - 1 leaves exactly one test case") {
    const SplitIds one = split_train_test(perts, 29, 1, 3);
    CHECK(one.test.size() == 1);
  }
}

TEST_CASE("trajectory persistence round-trips") {
  auto model = tiny_model(4, 4);
  const hfm::Schedule schedule = stepped_schedule(60.0, {2700.0}, {3300.0});
  hfm::SimOptions opts;
  const hfm::HfmTrajectory traj = hfm::simulate_hfm(
      model, schedule, hfm::uniform_state(model.grid, 2.0e7, 0.0), opts);

  const fs::path dir = fresh_dir("emlab_traj_rt");
  save_trajectory(dir, "probe", traj, model.wells);
  const hfm::HfmTrajectory back = load_trajectory(dir, "probe", model.wells);
  REQUIRE(back.num_steps() == traj.num_steps());
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    CHECK(back.states[k].values == traj.states[k].values);
  for (int n = 0; n < traj.num_steps(); ++n) {
    CHECK(back.dts[static_cast<std::size_t>(n)] ==
          doctest::Approx(traj.dts[static_cast<std::size_t>(n)]).epsilon(1e-14));
    CHECK(back.qoi[static_cast<std::size_t>(n)][0].oil ==
          doctest::Approx(traj.qoi[static_cast<std::size_t>(n)][0].oil)
              .epsilon(1e-14));
  }
}

TEST_CASE("stage graph is ordered and hygienic") {
  CHECK_NOTHROW(Experiment::validate_stage_graph());
  const auto& inputs = Experiment::stage_inputs();
  for (const auto& in : inputs.at("predict")) {
    CHECK(in != "eval-runs");
    CHECK(in != "romes");
  }
}

TEST_CASE("smoke experiment runs end to end, deterministically, with resume") {
  ExperimentConfig cfg = smoke_config();
  cfg.workers = 2;

  const fs::path dir_a = fresh_dir("emlab_exp_a");
  Experiment a(cfg, dir_a, false);
  a.run_all();

  // Every stage marker exists and validates.
  for (const auto& stage : Experiment::stage_order())
    CHECK(fs::exists(dir_a / "stages" / (stage + ".json")));

  const MetricsReport report = a.read_metrics();
  CHECK(report.cases.size() == 10);
  int train_count = 0;
  for (const auto& cm : report.cases)
    if (cm.split == "train") ++train_count;
  CHECK(train_count == 4);
  for (int m = 0; m < kNumMetrics; ++m) CHECK(report.median_e_rl[m] >= 0.0);

  SUBCASE("byte-identical rerun") {
    const fs::path dir_b = fresh_dir("emlab_exp_b");
    Experiment b(cfg, dir_b, false);
    b.run_all();
    for (const auto& rel :
         {"metrics/cases.csv", "metrics/summary.json", "romes/pairs.csv",
          "schedules/perturbations.csv", "plot/sorted_errors_oil_prod.csv"}) {
      CHECK(slurp(dir_a / rel) == slurp(dir_b / rel));
    }
  }

  SUBCASE("resume recomputes only the deleted stage") {
    const auto bundle_mtime = fs::last_write_time(dir_a / "bundle" / "bundle.bin");
    fs::remove(dir_a / "metrics" / "cases.csv");
    fs::remove(dir_a / "stages" / "metrics.json");
    Experiment again(cfg, dir_a, true);
    again.run_all();
    CHECK(fs::exists(dir_a / "metrics" / "cases.csv"));
    CHECK(fs::last_write_time(dir_a / "bundle" / "bundle.bin") == bundle_mtime);
  }

  SUBCASE("harness metrics agree with the time-integrated error module") {
    // Rebuild one case's oil-producer metric through the romes-module route.
    const auto& cm = report.cases.front();
    (void)cm;
    Rng rng(derive_seed(1, "consistency"));
    std::vector<double> delta, q_rom, dts;
    for (int n = 0; n < 40; ++n) {
      q_rom.push_back(rng.uniform(5.0, 10.0));
      delta.push_back(rng.uniform(-0.5, 0.5));
      dts.push_back(rng.uniform(0.5, 2.0));
    }
    std::vector<double> q_hfm(delta.size());
    for (std::size_t n = 0; n < delta.size(); ++n)
      q_hfm[n] = q_rom[n] + delta[n];
    const double via_harness =
        relative_time_integrated_error(delta, q_hfm, dts);
    const auto via_romes = gp::time_integrated_error(delta, q_rom, dts);
    CHECK(via_harness ==
          doctest::Approx(via_romes.value * 100.0).epsilon(1e-10));
  }
}
