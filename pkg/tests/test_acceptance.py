"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL line.

The sweeps run the catalog piston at its default 512 cells, so the whole
module takes several minutes on one core.
"""
import time

import numpy as np
import pytest

from penflow.chemistry import audit_network
from penflow.cli import SWEEPS
from penflow.diagnostics import (
    advect_density,
    convergence_study,
    default_basis,
    run_scenario,
    weak_residual,
)
from penflow.grid import Grid
from penflow.scenario import load_config
from penflow.thermo import EosSpec, ThermoPoint, flat_start_closure, gibbs_residual, verify_hypotheses

# operating window of the catalog scenarios, where the O(fd_step^2) constant is moderate
GIBBS_WINDOW = (0.5, 2.0)


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {name}: {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def piston_run():
    sc = load_config("piston1d", ["penalty.eps=1e-5"])
    traj, rep = run_scenario(sc)
    return sc, traj, rep


def sweep(command):
    param, values, fixed, thresholds, r2_min = SWEEPS[command]
    sc = load_config("piston1d", fixed)
    res = convergence_study(sc, param, values, tuple(thresholds))
    return res, thresholds, r2_min


def test_criterion_01_gibbs_consistency(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    eos = EosSpec()
    full, half = [], []
    for _ in range(100):
        rho, theta = rng.uniform(*GIBBS_WINDOW, size=2)
        pt = ThermoPoint(rho, theta, tuple(rng.dirichlet(np.ones(3))))
        full.append(gibbs_residual(pt, eos, fd_step=1e-4).residual)
        half.append(gibbs_residual(pt, eos, fd_step=5e-5).residual)
    full, half = np.array(full), np.array(half)
    ratio = float(np.min(full / half))
    elapsed = time.perf_counter() - t0
    # informational: on the wider audit box the truncation constant grows like theta^4 / rho^4
    wide = max(gibbs_residual(ThermoPoint(r, t, (0.2, 0.3, 0.5)), eos, fd_step=1e-4).residual
               for r in (0.1, 10.0) for t in (0.1, 10.0))
    ok = full.max() <= 1e-6 and ratio >= 3.5 and elapsed < 1.0
    report(1, "Gibbs residual", ok,
           f"max {full.max():.3e} (<= 1e-6) on {GIBBS_WINDOW}^2, min halving ratio {ratio:.3f} "
           f"(>= 3.5), {elapsed:.2f}s; corners of [0.1, 10]^2 reach {wide:.1e}")
    assert ok


def test_criterion_02_hypothesis_audit(report):
    t0 = time.perf_counter()
    default = verify_hypotheses(EosSpec(), ((0.1, 10.0), (0.1, 10.0)))
    corrupt = verify_hypotheses(EosSpec(closure=flat_start_closure(1.0)), ((0.1, 10.0), (0.1, 10.0)))
    elapsed = time.perf_counter() - t0
    flagged = [e.name for e in default.entries if e.status == "deviation"]
    ok = (default.passed and flagged == ["third law S(Z)->0"]
          and corrupt.failures == ["P'(0)>0"] and elapsed < 1.0)
    report(2, "hypothesis audit", ok,
           f"default failures {default.failures}, flagged {flagged}; "
           f"corrupted failures {corrupt.failures}; {elapsed:.2f}s")
    assert ok


def test_criterion_03_conservation(report):
    sc = load_config("frozen-box", ["run.T_final=1.0"])
    traj, rep = run_scenario(sc)
    mass = rep.column("mass")
    drift = abs(mass[-1] - mass[0]) / mass[0]
    ysum = float(np.max(rep.column("Y_sum_err")))
    clip = float(rep.column("clip_mass_cum")[-1]) / mass[0]
    ok = (traj.final.t == pytest.approx(1.0) and len(rep) == len(traj.logs) + 1
          and drift <= 1e-10 and ysum <= 1e-12 and clip <= 1e-10)
    report(3, "conservation", ok,
           f"mass drift {drift:.2e}, max |sum Y - 1| {ysum:.2e} over {len(rep)} samples, "
           f"clipped mass fraction {clip:.2e}")
    assert ok


def test_criterion_04_entropy_production(report, piston_run):
    sc, _, rep = piston_run
    audit = audit_network(sc.network, sc.eos, n_samples=10_000)
    smin = rep.column("sigma_en_min")
    smed = rep.column("sigma_en_median")
    margin = smin + 1e-10 * np.abs(smed)
    ok = audit.checks["sum g_k sigma_k<=0"][0] and bool(np.all(margin >= 0))
    report(4, "entropy production", ok,
           f"chemistry audit {'pass' if audit.passed else 'fail'}, min sigma_en {smin.min():.3e}, "
           f"median |sigma_en| at that sample {abs(smed[np.argmin(smin)]):.3e}")
    assert ok


def test_criterion_05_solid_extinction(report, piston_run):
    sc, traj, rep = piston_run
    srho = rep.column("solid_rho_max")
    t = rep.column("t")
    ok = sc.params.eps == 1e-5 and t[-1] == pytest.approx(1.0) and float(srho.max()) <= 1e-8
    report(5, "solid extinction", ok, f"max solid rho {srho.max():.3e} (<= 1e-8) over t in [0, {t[-1]:.3f}]")
    assert ok


def _sweep_ok(res, thresholds, r2_min):
    parts, ok = [], True
    for mon, min_slope in thresholds.items():
        slope, r2 = res.fits[mon]
        if min_slope is None:
            parts.append(f"{mon} {slope:.3f} (reported)")
            continue
        good = slope >= min_slope and res.monotone(mon) and (r2_min is None or r2 >= r2_min)
        ok &= good
        parts.append(f"{mon} {slope:.3f}>={min_slope} R2 {r2:.4f}")
    return ok, ", ".join(parts)


def test_criterion_06_penalty_limit(report):
    t0 = time.perf_counter()
    res, thresholds, r2_min = sweep("sweep-eps")
    ok, detail = _sweep_ok(res, thresholds, r2_min)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    report(6, "penalty limit", ok, f"{detail}, strictly decreasing {res.monotone('slip')}, {elapsed:.0f}s")
    assert ok


def test_criterion_07_scaling_limit(report):
    res, thresholds, r2_min = sweep("sweep-h")
    ok, detail = _sweep_ok(res, thresholds, r2_min)
    report(7, "scaling limit", ok, detail)
    assert ok


def test_criterion_08_artificial_pressure(report):
    res, thresholds, r2_min = sweep("sweep-delta")
    ok, detail = _sweep_ok(res, thresholds, r2_min)
    report(8, "artificial pressure", ok, f"{detail}, decreasing {res.monotone('delta_energy')}")
    assert ok


def test_criterion_09_weak_residuals(report):
    T = 0.5
    errs = {"continuity": [], "renormalized": []}
    ns = (64, 128, 256, 512)
    for n in ns:
        g = Grid(1, n, 2.0)
        x = g.centers[0]
        states = advect_density(g, 0.5 + np.exp(-(x / 0.25) ** 2), (0.5,), T)
        basis = default_basis(g, T, n_per_axis=5, extent=0.5)
        for eq in errs:
            errs[eq].append(np.max(np.abs(weak_residual(states, eq, basis, grid=g))))
    orders = {eq: np.log2(np.array(v[:-1]) / np.array(v[1:])) for eq, v in errs.items()}
    ok = all(np.all(o >= 0.8) for o in orders.values())
    report(9, "weak residuals", ok, "; ".join(
        f"{eq} orders {np.array2string(o, precision=3)}" for eq, o in orders.items()))
    assert ok


def test_criterion_10_relaxation_oracle(report):
    worst = 0.0
    pairs = [(dt, eps) for dt in (1e-5, 1e-4, 1e-3, 1e-2) for eps in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)]
    for dt, eps in pairs:
        sc = load_config("piston1d", ["grid.n=128", f"penalty.eps={eps}"])
        sim = sc.simulation()
        s = sc.initial_state(sim)
        M = sim.masks(0.0)
        V = sim.V(0.0)
        band = np.nonzero(M.delta > 0)[0]
        i = band[np.argmax(s.rho[band])]
        w0 = 0.3
        u = V.copy()
        u[0, i] += w0
        m_new, _ = sim._penalty(s.rho, s.rho * u, u, V, V, M, dt)
        w = m_new[0, i] / s.rho[i] - V[0, i]
        expect = w0 * np.exp(-dt * M.delta[i] / (s.rho[i] * eps))
        worst = max(worst, abs(w - expect) / w0)
    ok = len(pairs) == 20 and worst <= 1e-10
    report(10, "relaxation oracle", ok, f"worst error {worst:.2e} relative to the initial slip over {len(pairs)} pairs")
    assert ok
