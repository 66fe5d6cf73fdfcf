import math
import warnings

import numpy as np
import pytest
import sympy as sp

from penflow.diagnostics import (
    G0,
    Monitor,
    SweepResult,
    advect_density,
    convergence_study,
    default_basis,
    energy_budget,
    entropy_production_field,
    fit_loglog,
    read_sweep_table,
    renormalization_B,
    run_scenario,
    slip_error,
    solid_residuals,
    species_inequality,
    species_monitor,
    stress_tensor,
    viscous_dissipation,
    weak_residual,
)
from penflow.domain import Disk, MovingDomain, ZeroVelocity, interface_quadrature
from penflow.grid import Grid
from penflow.scenario import load_config
from penflow.solver import run

QUIET = ["chemistry.kind=zero", "initial.rho_amp=0", "initial.theta_amp=0",
         "initial.Y_amp=(0, 0, 0)"]


def box2d(n=32, extra=()):
    return load_config("frozen-box", ["grid.dim=2", f"grid.n={n}", *extra])


def test_rest_state_produces_no_entropy():
    sc = load_config("frozen-box", ["grid.n=32", *QUIET])
    sim = sc.simulation()
    s = sc.initial_state(sim)
    ep = entropy_production_field(s, sc.grid, sc.eos, sim.masks(0.0), sc.params, sc.network)
    assert np.all(ep.field == 0.0) and ep.min == 0.0 and ep.excluded == 0


def test_shear_dissipation_matches_symbolic_value():
    y, mu, eta = sp.symbols("y mu eta", positive=True)
    G = sp.Matrix([[0, 1], [0, 0]])  # grad of u = (y, 0)
    S = mu * (G + G.T) + (eta - sp.Rational(2, 3) * mu) * G.trace() * sp.eye(2)
    oracle = sp.simplify(sum(S[i, j] * G[i, j] for i in range(2) for j in range(2)))
    assert oracle == mu

    sc = box2d(n=32, extra=QUIET)
    sim = sc.simulation()
    g = sc.grid
    s = sc.initial_state(sim)
    u = np.stack([g.centers[1], np.zeros(g.shape)])
    ep = entropy_production_field(s, g, sc.eos, sim.masks(0.0), sc.params, u=u)
    mu_val = sim.primitives(s)["mu"]
    core = (slice(2, -2), slice(2, -2))
    theta = s.theta
    assert np.allclose(ep.field[core], (mu_val / theta)[core], rtol=1e-12)
    assert np.all(ep.field[core] > 0)


def test_viscous_dissipation_equals_stress_contraction():
    rng = np.random.default_rng(0)
    grad = rng.normal(size=(2, 2, 50))
    mu, eta = 0.3, 0.1
    S = stress_tensor(grad, mu, eta)
    assert np.allclose(np.sum(S * grad, axis=(0, 1)), viscous_dissipation(grad, mu, eta))
    assert np.all(viscous_dissipation(grad, mu, eta) >= 0)


def test_conduction_entropy_production():
    sc = load_config("frozen-box", ["grid.n=64", *QUIET])
    sim = sc.simulation()
    g = sc.grid
    x = g.centers[0]
    theta = 1.0 + 0.1 * (x + g.half_width)
    s = sim.make_state(0.0, np.ones_like(x), np.zeros((1, x.size)), theta,
                       np.broadcast_to(np.array([0.3, 0.3, 0.4])[:, None], (3, x.size)))
    ep = entropy_production_field(s, g, sc.eos, sim.masks(0.0), sc.params)
    kappa = sim.primitives(s)["kappa"]
    core = slice(1, -1)
    assert np.allclose(ep.field[core], (kappa * 0.01 / theta**2)[core], rtol=1e-10)


def test_entropy_production_excludes_cold_cells():
    sc = load_config("frozen-box", ["grid.n=32", *QUIET])
    sim = sc.simulation()
    s = sc.initial_state(sim)
    s.theta[3] = 0.0
    ep = entropy_production_field(s, sc.grid, sc.eos, sim.masks(0.0), sc.params)
    assert ep.excluded == 1 and np.isnan(ep.field[3])


def test_slip_of_resting_fluid_in_moving_disk():
    dom = MovingDomain(Disk((0.0, 0.0), 1.0), ZeroVelocity(dim=2), R=1.5)
    g = Grid(2, 128, 3.0)
    quad = interface_quadrature(0.0, g, dom)
    Vq = np.stack([np.ones(quad.size), np.zeros(quad.size)])
    # closed form: the integral of cos^2 over the unit circle
    assert slip_error(np.zeros((2,) + g.shape), quad, g, Vq) == pytest.approx(math.pi, rel=0.02)
    u = np.stack([np.ones(g.shape), np.zeros(g.shape)])
    assert slip_error(u, quad, g, Vq) == pytest.approx(0.0, abs=1e-24)


def test_solid_residuals_are_zero_without_solid():
    sc = load_config("frozen-box", ["grid.n=32"])
    sim = sc.simulation()
    s = sc.initial_state(sim)
    assert solid_residuals(s, sim.masks(0.0), sc.params, sc.eos, sc.grid) == (0, 0, 0, 0, 0)


def test_solid_residuals_manufactured_fields():
    sc = load_config("piston1d", ["grid.n=128"])
    sim = sc.simulation()
    g = sc.grid
    n = g.n
    M = sim.masks(0.0)
    s = sim.make_state(0.0, np.ones(n), np.zeros((1, n)), np.ones(n),
                       np.broadcast_to(np.array([0.2, 0.3, 0.5])[:, None], (3, n)))
    A = solid_residuals(s, M, sc.params, sc.eos, g, u=np.zeros((1, n)))
    a_xi = sc.eos.a * sc.params.xi
    solid = g.integrate(M.solid.astype(float))
    assert A.A1 == pytest.approx(a_xi * solid, rel=1e-14)
    assert A.A4 == pytest.approx(a_xi * solid, rel=1e-14)
    assert A.A2 == 0.0 and A.A3 == 0.0 and A.A5 == 0.0


def test_species_monitor_after_steps_and_hessian_constant():
    assert G0 == 2.0
    sc = load_config("piston1d", ["grid.n=64"])
    sim = sc.simulation()
    traj = run(sim, sc.initial_state(sim), 0.05)
    rep = species_monitor(traj.final, sc.grid)
    assert rep.Y_min >= 0 and rep.Y_max <= 1 and rep.sum_error <= 1e-12


def test_pure_diffusion_dissipates_convex_entropy():
    sc = load_config("frozen-box", ["grid.n=64", "chemistry.kind=zero", "initial.rho_amp=0",
                                    "initial.theta_amp=0", "run.T_final=0.2"])
    traj, rep = run_scenario(sc)
    G = rep.column("G_int")
    assert np.all(np.diff(G) <= 1e-15 * G[0])
    assert G[-1] < G[0]
    assert np.all(species_inequality(rep) <= 1e-3 * abs(rep.column("G_rate")).max())
    # the velocity never leaves zero: rho and theta are uniform
    assert np.max(np.abs(traj.final.m)) == 0.0


def test_energy_budget_at_rest_is_exact():
    sc = load_config("frozen-box", ["grid.n=32", *QUIET, "run.T_final=0.05"])
    _, rep = run_scenario(sc)
    b = energy_budget(rep, sc.params.eps)
    assert np.all(b.residual == 0.0)
    assert np.all(b.bookkeeping == 0.0)


def test_energy_budget_needs_two_samples():
    from penflow.diagnostics import BudgetReport
    with pytest.raises(ValueError):
        energy_budget(BudgetReport(rows=[tuple(range(26))]), 1e-3)


def test_thermal_sink_double_bookkeeping():
    sc = load_config("piston1d", ["grid.n=64", "run.T_final=0.1", "initial.theta_base=2.0"])
    traj, rep = run_scenario(sc)
    b = energy_budget(rep, sc.params.eps)
    assert np.all(b.sink > 0)
    logged = sum(lg.sink for lg in traj.logs)
    assert float(np.sum(b.sink)) == pytest.approx(logged, rel=1e-12)
    scale = abs(rep.column("total_energy")[0])
    assert np.max(np.abs(b.bookkeeping)) <= 1e-12 * scale


def test_closed_box_budget_is_conservative():
    sc = load_config("frozen-box", ["grid.n=64", "chemistry.kind=zero", "run.T_final=0.05"])
    _, rep = run_scenario(sc)
    b = energy_budget(rep, sc.params.eps)
    assert np.max(np.abs(b.residual)) <= 1e-12 * rep.column("total_energy")[0]


def test_monitor_columns_have_equal_length_and_increasing_time():
    sc = load_config("piston1d", ["grid.n=64", "run.T_final=0.05"])
    _, rep = run_scenario(sc, every=3)
    t = rep.column("t")
    assert np.all(np.diff(t) > 0)
    assert all(len(r) == len(rep.rows[0]) for r in rep.rows)


def test_weak_residual_of_constant_fields_vanishes():
    g = Grid(1, 64, 2.0)
    states = advect_density(g, np.full(g.n, 0.7), (0.0,), 0.5)
    basis = default_basis(g, 0.5)
    for eq in ("continuity", "renormalized"):
        assert np.max(np.abs(weak_residual(states, eq, basis, grid=g))) <= 1e-14


def test_renormalized_form_with_zero_b_is_continuity():
    g = Grid(1, 128, 2.0)
    x = g.centers[0]
    states = advect_density(g, 0.5 + np.exp(-(x / 0.25) ** 2), (0.5,), 0.5)
    basis = default_basis(g, 0.5, n_per_axis=5, extent=0.5)
    cont = weak_residual(states, "continuity", basis, grid=g)
    zero = weak_residual(states, "renormalized", basis, grid=g, b=lambda z: 0.0 * z)
    assert np.array_equal(cont, zero)


def test_renormalization_B_closed_form():
    # b(z) = z / (1 + z) gives B(r) = 1 + log(2 r / (1 + r))
    r = np.array([0.0, 0.3, 1.0, 4.0])
    rB, B = renormalization_B(r, lambda z: z / (1 + z))
    pos = r > 0
    assert B[pos] == pytest.approx(1.0 + np.log(2 * r[pos] / (1 + r[pos])), rel=1e-13)
    assert rB[0] == 0.0


def test_momentum_weak_form_excludes_normal_test_functions():
    sc = load_config("piston1d", ["grid.n=64", "run.T_final=0.05"])
    sim = sc.simulation()
    traj = run(sim, sc.initial_state(sim), 0.05, keep_every=2)
    basis = default_basis(sc.grid, 0.05, n_per_axis=6, extent=0.9)
    with pytest.warns(RuntimeWarning, match="excluded"):
        res = weak_residual(traj.states, "momentum", basis, sim=sim)
    assert np.any(np.isnan(res)) and np.any(np.isfinite(res))


def test_species_weak_residual_is_small_for_a_run():
    sc = load_config("frozen-box", ["grid.n=128", "run.T_final=0.05"])
    sim = sc.simulation()
    traj = run(sim, sc.initial_state(sim), 0.05, keep_every=1)
    basis = default_basis(sc.grid, 0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = weak_residual(traj.states, "species", basis, sim=sim)
    scale = np.max(np.abs(sc.grid.integrate(traj.states[0].rhoY[0])))
    assert res.shape == (3, basis.size)
    assert np.max(np.abs(res)) <= 1e-3 * scale


def test_fit_loglog_recovers_power_law():
    x = np.array([1e-2, 1e-3, 1e-4, 1e-5])
    slope, r2 = fit_loglog(x, 3.0 * x**1.5)
    assert slope == pytest.approx(1.5, rel=1e-12) and r2 == pytest.approx(1.0)


def test_sweep_table_rejects_mixed_hashes():
    res = SweepResult("penalty.eps", [1e-2, 1e-3, 1e-4, 1e-5], {"slip": [4.0, 3.0, 2.0, 1.0]},
                      ["a", "b", "c", "d"], "base", {"slip": (0.2, 0.99)})
    rows = read_sweep_table(res.to_csv())
    assert [r["value"] for r in rows] == ["0.01", "0.001", "0.0001", "1e-05"]
    assert res.monotone("slip")
    bad = res.to_csv().replace(",base\n", ",other\n", 1)
    with pytest.raises(ValueError, match="base hash"):
        read_sweep_table(bad)


def test_convergence_study_needs_four_values():
    sc = load_config("piston1d", ["grid.n=32"])
    with pytest.raises(ValueError, match="four"):
        convergence_study(sc, "penalty.eps", [1e-2, 1e-3, 1e-4])
    with pytest.raises(ValueError, match="unknown monitors"):
        convergence_study(sc, "penalty.eps", [1e-2, 1e-3, 1e-4, 1e-5], monitors=("bogus",))
