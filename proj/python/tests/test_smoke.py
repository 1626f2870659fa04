"""Smoke tests for the python bindings: a miniature end-to-end workflow."""

import math

import numpy as np
import pytest

import emlab


@pytest.fixture(scope="module")
def model():
    m = emlab.Model()
    m.grid.nx = 6
    m.grid.ny = 6
    m.grid.dx = m.grid.dy = m.grid.dz = 10.0
    m.grid.perm = np.full(36, 50.0 * emlab.units.millidarcy)
    m.grid.poro = np.full(36, 0.2)
    m.fluid.mu_o = 3.0 * emlab.units.centipoise
    m.fluid.mu_w = 1.0 * emlab.units.centipoise

    prod = emlab.WellSpec()
    prod.name = "P1"
    prod.cell = m.grid.cell(5, 5)
    prod.kind = emlab.WellKind.producer
    prod.r_w = 0.1
    prod.wi = emlab.peaceman_well_index(m.grid, prod.cell, 0.1)

    inj = emlab.WellSpec()
    inj.name = "I1"
    inj.cell = m.grid.cell(0, 0)
    inj.kind = emlab.WellKind.injector
    inj.r_w = 0.1
    inj.wi = emlab.peaceman_well_index(m.grid, inj.cell, 0.1)

    m.wells = [prod, inj]
    return m


@pytest.fixture(scope="module")
def schedule():
    return emlab.Schedule(
        horizon_days=200.0,
        control_times_days=[100.0, 200.0],
        bhp_psi=[[2700.0, 3300.0], [2740.0, 3260.0]],
    )


@pytest.fixture(scope="module")
def training_run(model, schedule):
    x0 = emlab.uniform_state(model.grid, 2.0e7, 0.0)
    return emlab.simulate_hfm(model, schedule, x0, store_jacobians=True)


def test_simulation_conserves_water(model, training_run):
    assert training_run.num_steps > 5
    assert training_run.water_balance_defect(model) < 1e-8
    pvi = training_run.pvi
    assert all(b >= a for a, b in zip(pvi, pvi[1:]))


def test_rom_replays_training_schedule(model, schedule, training_run):
    basis = emlab.build_pod_basis(
        [training_run],
        num_pressure_modes=8,
        num_saturation_modes=10,
        pressure_scale=1.0e7,
    )
    ops = emlab.precompute_operators(training_run, schedule, basis, model)
    rom = emlab.simulate_rom(schedule, ops, basis, model.wells, model.fluid)
    assert rom.num_steps == training_run.num_steps
    for n in range(rom.num_steps):
        z = rom.reduced_state(n)
        z_ref = basis.project(training_run.states[n + 1])
        assert np.linalg.norm(z - z_ref) <= 1e-8 * max(
            1.0, np.linalg.norm(z_ref)
        )


def test_random_forest_learns_a_simple_function():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, size=(300, 4))
    y = 2.0 * x[:, 1] - x[:, 3] + 0.05 * rng.standard_normal(300)
    opts = emlab.ForestOptions()
    opts.n_trees = 60
    forest = emlab.RandomForest.fit(x, y, opts, seed=5)
    assert forest.oob_error < 0.5
    imp = np.asarray(forest.importance)
    assert imp[1] > imp[0]
    probe = np.array([0.0, 0.5, 0.0, -0.5])
    assert abs(forest.predict(probe) - 1.5) < 0.5


def test_lasso_recovers_sparse_support():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((200, 6))
    y = 3.0 * x[:, 2] + 1.0
    grid = emlab.default_lambda_grid(x, y, 20, 1e-5)
    best, _, _ = emlab.cv_lambda(x, y, 5, grid, seed=9)
    model = emlab.fit_lasso(x, y, best)
    assert model.converged
    coef = np.asarray(model.coef)
    assert abs(coef[2] - 3.0) < 0.2
    assert np.all(np.abs(np.delete(coef, 2)) < 0.1)


def test_gp_interpolates_and_bounds():
    x = np.linspace(0.0, 1.0, 8)
    y = 1.0 + 2.0 * x
    gp = emlab.GpModel.fit(x, y)
    mean, var = gp.predict(0.5)
    assert abs(mean - 2.0) < 1e-6
    lo, hi = emlab.confidence_interval(mean, var, 0.90)
    assert lo <= mean <= hi


def test_category_assignment_matches_staged_rules():
    assert emlab.assign_category(0.02, 0.03, 0.05, 0.6) == emlab.Category.A
    assert emlab.assign_category(0.3, 0.2, 0.05, 0.6) == emlab.Category.B_minus
    assert emlab.assign_category(0.5, 0.7, 0.05, 0.6) == emlab.Category.C
