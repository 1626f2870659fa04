// Python bindings for the main operations: high-fidelity simulation,
// POD-TPWL surrogates, the learners, and the experiment pipeline.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "emlab/error_models.hpp"
#include "emlab/features.hpp"
#include "emlab/pipeline.hpp"
#include "emlab/romes.hpp"

namespace py = pybind11;
using namespace emlab;

namespace {

hfm::Schedule schedule_from_dict(double horizon_days,
                                 const std::vector<double>& control_times_days,
                                 const std::vector<std::vector<double>>& bhp_psi) {
  hfm::Schedule s;
  s.horizon = horizon_days * units::day;
  for (double t : control_times_days) s.control_times.push_back(t * units::day);
  for (const auto& row : bhp_psi) {
    std::vector<double> r;
    for (double v : row) r.push_back(v * units::psi);
    s.bhp.push_back(std::move(r));
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_emlab, m) {
  m.doc() =
      "Two-phase flow laboratory: high-fidelity simulation, POD-TPWL "
      "surrogates, and machine-learned error models";

  py::module_ u = m.def_submodule("units");
  u.attr("day") = units::day;
  u.attr("psi") = units::psi;
  u.attr("centipoise") = units::centipoise;
  u.attr("millidarcy") = units::millidarcy;

  py::class_<hfm::Grid>(m, "Grid")
      .def(py::init<>())
      .def_readwrite("nx", &hfm::Grid::nx)
      .def_readwrite("ny", &hfm::Grid::ny)
      .def_readwrite("dx", &hfm::Grid::dx)
      .def_readwrite("dy", &hfm::Grid::dy)
      .def_readwrite("dz", &hfm::Grid::dz)
      .def_readwrite("perm", &hfm::Grid::perm)
      .def_readwrite("poro", &hfm::Grid::poro)
      .def("pore_volume", &hfm::Grid::pore_volume)
      .def("cell", &hfm::Grid::cell);

  py::class_<hfm::FluidModel>(m, "FluidModel")
      .def(py::init<>())
      .def_readwrite("mu_o", &hfm::FluidModel::mu_o)
      .def_readwrite("mu_w", &hfm::FluidModel::mu_w)
      .def_readwrite("krw_exponent", &hfm::FluidModel::krw_exponent)
      .def_readwrite("kro_exponent", &hfm::FluidModel::kro_exponent)
      .def("mobility_w", &hfm::FluidModel::mobility_w)
      .def("mobility_o", &hfm::FluidModel::mobility_o);

  py::enum_<hfm::WellKind>(m, "WellKind")
      .value("producer", hfm::WellKind::Producer)
      .value("injector", hfm::WellKind::Injector);

  py::class_<hfm::WellSpec>(m, "WellSpec")
      .def(py::init<>())
      .def_readwrite("name", &hfm::WellSpec::name)
      .def_readwrite("cell", &hfm::WellSpec::cell)
      .def_readwrite("kind", &hfm::WellSpec::kind)
      .def_readwrite("wi", &hfm::WellSpec::wi)
      .def_readwrite("r_w", &hfm::WellSpec::r_w);

  py::class_<hfm::Model>(m, "Model")
      .def(py::init<>())
      .def_readwrite("grid", &hfm::Model::grid)
      .def_readwrite("fluid", &hfm::Model::fluid)
      .def_readwrite("wells", &hfm::Model::wells);

  py::class_<hfm::Schedule>(m, "Schedule")
      .def(py::init(&schedule_from_dict), py::arg("horizon_days"),
           py::arg("control_times_days"), py::arg("bhp_psi"))
      .def_readonly("horizon", &hfm::Schedule::horizon);

  py::class_<hfm::WellRates>(m, "WellRates")
      .def_readonly("oil", &hfm::WellRates::oil)
      .def_readonly("water", &hfm::WellRates::water);

  py::class_<hfm::HfmTrajectory>(m, "HfmTrajectory")
      .def_property_readonly("num_steps", &hfm::HfmTrajectory::num_steps)
      .def_readonly("dts", &hfm::HfmTrajectory::dts)
      .def_readonly("times", &hfm::HfmTrajectory::times)
      .def_readonly("pvi", &hfm::HfmTrajectory::pvi)
      .def_property_readonly("states",
                             [](const hfm::HfmTrajectory& t) {
                               Eigen::MatrixXd out(
                                   t.states.size(),
                                   t.states.front().values.size());
                               for (std::size_t k = 0; k < t.states.size(); ++k)
                                 out.row(static_cast<Eigen::Index>(k)) =
                                     t.states[k].values;
                               return out;
                             })
      .def("rates",
           [](const hfm::HfmTrajectory& t, int step, int well) {
             return t.qoi.at(static_cast<std::size_t>(step))
                 .at(static_cast<std::size_t>(well));
           })
      .def("water_balance_defect",
           [](const hfm::HfmTrajectory& t, const hfm::Model& m) {
             return hfm::water_balance_defect(t, m);
           });

  m.def("peaceman_well_index", &hfm::peaceman_well_index, py::arg("grid"),
        py::arg("cell"), py::arg("r_w"));
  m.def("synthetic_log_normal_perm", &hfm::synthetic_log_normal_perm,
        py::arg("nx"), py::arg("ny"), py::arg("mean_perm"),
        py::arg("log_sigma"), py::arg("corr_cells"), py::arg("seed"));
  m.def(
      "uniform_state",
      [](const hfm::Grid& g, double pressure, double saturation) {
        return hfm::uniform_state(g, pressure, saturation).values;
      },
      py::arg("grid"), py::arg("pressure"), py::arg("saturation"));
  m.def(
      "simulate_hfm",
      [](const hfm::Model& model, const hfm::Schedule& schedule,
         const Eigen::VectorXd& initial, bool store_jacobians) {
        hfm::SimOptions opts;
        opts.store_jacobians = store_jacobians;
        hfm::State x0;
        x0.values = initial;
        return hfm::simulate_hfm(model, schedule, x0, opts);
      },
      py::arg("model"), py::arg("schedule"), py::arg("initial"),
      py::arg("store_jacobians") = false);
  m.def(
      "well_rates",
      [](double p, double s, double u, const hfm::WellSpec& w,
         const hfm::FluidModel& f) { return hfm::well_rates(p, s, u, w, f); },
      py::arg("p"), py::arg("s"), py::arg("u"), py::arg("well"),
      py::arg("fluid"));

  py::class_<rom::PodBasis>(m, "PodBasis")
      .def_readonly("phi", &rom::PodBasis::phi)
      .def_readonly("x_ref", &rom::PodBasis::x_ref)
      .def_readonly("row_scale", &rom::PodBasis::row_scale)
      .def_property_readonly("rank", &rom::PodBasis::rank)
      .def("project", &rom::PodBasis::project)
      .def("reconstruct", &rom::PodBasis::reconstruct);

  py::class_<rom::TpwlOperators>(m, "TpwlOperators")
      .def_property_readonly("num_steps", &rom::TpwlOperators::num_steps)
      .def_readonly("pore_volume", &rom::TpwlOperators::pore_volume);

  py::class_<rom::RomTrajectory>(m, "RomTrajectory")
      .def_property_readonly("num_steps", &rom::RomTrajectory::num_steps)
      .def_readonly("well_states", &rom::RomTrajectory::well_states)
      .def_readonly("coverage_exceeded", &rom::RomTrajectory::coverage_exceeded)
      .def("rates",
           [](const rom::RomTrajectory& t, int step, int well) {
             return t.qoi.at(static_cast<std::size_t>(step))
                 .at(static_cast<std::size_t>(well));
           })
      .def("reduced_state", [](const rom::RomTrajectory& t, int step) {
        return t.steps.at(static_cast<std::size_t>(step)).z;
      });

  m.def(
      "build_pod_basis",
      [](const std::vector<const hfm::HfmTrajectory*>& runs, int lp, int ls,
         double pressure_scale) {
        return rom::build_pod_basis(runs, lp, ls, pressure_scale);
      },
      py::arg("runs"), py::arg("num_pressure_modes"),
      py::arg("num_saturation_modes"), py::arg("pressure_scale"));
  m.def("precompute_operators", &rom::precompute_operators, py::arg("primary"),
        py::arg("training_schedule"), py::arg("basis"), py::arg("model"));
  m.def("simulate_rom", &rom::simulate_rom, py::arg("schedule"), py::arg("ops"),
        py::arg("basis"), py::arg("wells"), py::arg("fluid"));
  m.def("select_linearization_point", &rom::select_linearization_point);

  py::class_<learn::ForestOptions>(m, "ForestOptions")
      .def(py::init<>())
      .def_readwrite("n_trees", &learn::ForestOptions::n_trees)
      .def_readwrite("m_try", &learn::ForestOptions::m_try)
      .def_readwrite("min_leaf", &learn::ForestOptions::min_leaf)
      .def_readwrite("max_depth", &learn::ForestOptions::max_depth)
      .def_readwrite("bootstrap", &learn::ForestOptions::bootstrap);

  py::class_<learn::RandomForest>(m, "RandomForest")
      .def_static("fit", &learn::RandomForest::fit, py::arg("x"), py::arg("y"),
                  py::arg("options"), py::arg("seed"), py::arg("workers") = 1)
      .def_static("fit_classifier", &learn::RandomForest::fit_classifier,
                  py::arg("x"), py::arg("labels"), py::arg("num_labels"),
                  py::arg("options"), py::arg("seed"), py::arg("workers") = 1)
      .def("predict", &learn::RandomForest::predict)
      .def("predict_many", &learn::RandomForest::predict_many)
      .def_property_readonly("oob_error", &learn::RandomForest::oob_error)
      .def_property_readonly("importance", &learn::RandomForest::importance);

  py::class_<learn::LassoModel>(m, "LassoModel")
      .def_readonly("intercept", &learn::LassoModel::intercept)
      .def_readonly("coef", &learn::LassoModel::coef)
      .def_readonly("converged", &learn::LassoModel::converged)
      .def("predict", &learn::LassoModel::predict)
      .def("nonzeros", &learn::LassoModel::nonzeros);

  m.def("fit_lasso", &learn::fit_lasso, py::arg("x"), py::arg("y"),
        py::arg("lam"), py::arg("tol") = 1.0e-8,
        py::arg("max_sweeps") = 100000);
  m.def(
      "cv_lambda",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int k,
         const std::vector<double>& grid, std::uint64_t seed) {
        const auto r = learn::cv_lambda(x, y, k, grid, seed);
        return py::make_tuple(r.best_lambda, r.grid, r.cv_errors);
      },
      py::arg("x"), py::arg("y"), py::arg("k_folds"), py::arg("lambda_grid"),
      py::arg("seed"));
  m.def("default_lambda_grid", &learn::default_lambda_grid, py::arg("x"),
        py::arg("y"), py::arg("count"), py::arg("min_ratio"));

  py::enum_<loc::Category>(m, "Category")
      .value("A", loc::Category::A)
      .value("B_plus", loc::Category::BPlus)
      .value("B_minus", loc::Category::BMinus)
      .value("C", loc::Category::C);
  m.def("assign_category", &loc::assign_category, py::arg("s_rom"),
        py::arg("s_hfm"), py::arg("eps_a"), py::arg("eps_c"));

  py::class_<loc::KMeansModel>(m, "KMeansModel")
      .def_readonly("k", &loc::KMeansModel::k)
      .def_readonly("centers", &loc::KMeansModel::centers)
      .def_readonly("inertia", &loc::KMeansModel::inertia)
      .def("assign", &loc::KMeansModel::assign);
  m.def("kmeans_fit", &loc::kmeans_fit, py::arg("points"), py::arg("k"),
        py::arg("seed"), py::arg("max_iter") = 100);
  m.def("choose_k_elbow", &loc::choose_k_elbow, py::arg("points"),
        py::arg("k_range"), py::arg("seed"));

  py::class_<gp::GpModel>(m, "GpModel")
      .def_static("fit",
                  [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                    return gp::GpModel::fit(x, y);
                  })
      .def("predict",
           [](const gp::GpModel& g, double x) {
             const auto p = g.predict(x);
             return py::make_tuple(p.mean, p.variance);
           })
      .def_property_readonly("slope", &gp::GpModel::mean_slope)
      .def_property_readonly("intercept", &gp::GpModel::mean_intercept);
  m.def("confidence_interval", &gp::confidence_interval, py::arg("mean"),
        py::arg("variance"), py::arg("level") = 0.90);
  m.def(
      "time_integrated_error",
      [](const std::vector<double>& deltas, const std::vector<double>& rates,
         const std::vector<double>& dts) {
        const auto h = gp::time_integrated_error(deltas, rates, dts);
        return py::make_tuple(h.value, h.degenerate);
      },
      py::arg("deltas"), py::arg("rom_rates"), py::arg("dts"));

  py::class_<pipe::ExperimentConfig>(m, "ExperimentConfig")
      .def_static("load", &pipe::ExperimentConfig::load)
      .def("build_model", &pipe::ExperimentConfig::build_model)
      .def("training_schedule", &pipe::ExperimentConfig::tpwl_training_schedule)
      .def_property_readonly(
          "master_seed",
          [](const pipe::ExperimentConfig& c) { return c.master_seed; });

  py::class_<pipe::MetricsReport>(m, "MetricsReport")
      .def_property_readonly("median_e_rl",
                             [](const pipe::MetricsReport& r) {
                               return std::vector<double>(
                                   r.median_e_rl, r.median_e_rl + 3);
                             })
      .def_property_readonly("median_e_corr",
                             [](const pipe::MetricsReport& r) {
                               return std::vector<double>(
                                   r.median_e_corr, r.median_e_corr + 3);
                             })
      .def_readonly("misclassification_rate",
                    &pipe::MetricsReport::misclassification_rate)
      .def_readonly("improved_pairs", &pipe::MetricsReport::improved_pairs)
      .def_readonly("total_pairs", &pipe::MetricsReport::total_pairs);

  py::class_<pipe::Experiment>(m, "Experiment")
      .def(py::init<pipe::ExperimentConfig, std::filesystem::path, bool>(),
           py::arg("config"), py::arg("out_dir"), py::arg("resume") = false)
      .def("run_all", &pipe::Experiment::run_all,
           py::call_guard<py::gil_scoped_release>())
      .def("run_through", &pipe::Experiment::run_through,
           py::call_guard<py::gil_scoped_release>())
      .def("read_metrics", &pipe::Experiment::read_metrics);
}
