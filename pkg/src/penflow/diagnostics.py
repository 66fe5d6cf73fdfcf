"""Monitors for the balance laws and inequalities of the penalized system.

Everything here is read-only with respect to solver states.  The
:class:`Monitor` callback samples a run into a :class:`BudgetReport`;
:func:`energy_budget` turns a report into per-interval residuals;
:func:`weak_residual` evaluates space-time weak forms on snapshot
sequences; :func:`convergence_study` drives parameter sweeps and fits
log-log rates.
"""
from __future__ import annotations

import csv
import io
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .chemistry import eval_production
from .domain import Quadrature, interpolate_to_points, velocity_gradient
from .grid import Grid
from .penalty import PenaltyParams, delta_energy_density, mollified_coefficients
from .solver import (RHO_FLOOR, THETA_FLOOR, SimState, Simulation, cell_gradient, run,
                     rusanov_flux, _div_faces, _sl)
from .thermo import EosSpec

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# pointwise fields
# ---------------------------------------------------------------------------


def stress_tensor(grad_u, mu, eta):
    """``S = mu (grad u + grad u^T - 2/3 div u I) + eta div u I``.

    ``grad_u[i, j] = d u_i / d x_j``; the result has the same layout.
    """
    d = grad_u.shape[0]
    div = sum(grad_u[k, k] for k in range(d))
    S = mu * (grad_u + np.swapaxes(grad_u, 0, 1))
    for k in range(d):
        S[k, k] = S[k, k] + (eta - 2.0 / 3.0 * mu) * div
    return S


def viscous_dissipation(grad_u, mu, eta):
    """``S : grad u`` written as a sum of squares.

    With ``D`` the symmetric gradient this is ``mu (2 D:D - 2/3 (tr D)^2) +
    eta (tr D)^2``, non-negative in one and two dimensions.
    """
    d = grad_u.shape[0]
    D = 0.5 * (grad_u + np.swapaxes(grad_u, 0, 1))
    tr = sum(D[k, k] for k in range(d))
    DD = np.sum(D * D, axis=(0, 1))
    return mu * (2.0 * DD - 2.0 / 3.0 * tr**2) + eta * tr**2


class EntropyProduction(NamedTuple):
    field: np.ndarray
    min: float
    median_abs: float
    excluded: int
    parts: dict


def entropy_production_field(state: SimState, grid: Grid, eos: EosSpec, masks, params=None,
                             net=None, u=None) -> EntropyProduction:
    """``sigma_en = (S:grad u + kappa |grad theta|^2 / theta - rho sum g_k sigma_k) / theta``.

    ``S`` and ``kappa`` are the mollified coefficients.  ``u`` defaults to
    the momentum divided by density.  Cells with ``theta`` at or below the
    recovery floor are excluded (reported in ``excluded``, set to NaN in
    ``field``).
    """
    theta = state.theta
    ok = theta > THETA_FLOOR
    th = np.where(ok, theta, 1.0)
    if u is None:
        u = state.velocity()
    mu, eta, zeta, kappa, _ = mollified_coefficients(th, masks.f_omega, masks.chi_nu,
                                                     masks.chi_xi, eos)
    gu = cell_gradient(u, grid.dx, grid.dim, "wall")
    visc = viscous_dissipation(gu, mu, eta)
    gth = cell_gradient(theta, grid.dx, grid.dim, "neumann")
    heat = kappa * np.sum(gth * gth, axis=0) / th
    chem = np.zeros_like(theta)
    if net is not None and net.kind != "zero":
        live = (state.rho > RHO_FLOOR) & ok
        sig = eval_production(th, state.Y, eos.gibbs(th), net)
        chem = np.where(live, -state.rho * np.sum(eos.gibbs(th) * sig, axis=0), 0.0)
    sigma = (visc + heat + chem) / th
    sigma = np.where(ok, sigma, np.nan)
    vals = sigma[ok]
    return EntropyProduction(sigma, float(vals.min()) if vals.size else 0.0,
                             float(np.median(np.abs(vals))) if vals.size else 0.0,
                             int(np.count_nonzero(~ok)),
                             {"viscous": visc, "heat": heat, "chemistry": chem})


def slip_error(u: np.ndarray, quad: Quadrature, grid: Grid, Vq) -> float:
    """``sum_q w_q |(u(x_q) - V(x_q)) . n_q|^2`` with hat-kernel interpolation of ``u``.

    ``Vq`` holds the domain velocity at the quadrature points, shape ``(d, m)``.
    """
    if quad is None or quad.size == 0:
        return 0.0
    uq = interpolate_to_points(u, quad, grid)
    w = np.sum((uq - np.asarray(Vq)) * quad.normals.T, axis=0)
    return float(np.sum(quad.weights * w * w))


class SolidResiduals(NamedTuple):
    A1: float
    A2: float
    A3: float
    A4: float
    A5: float


def solid_residuals(state: SimState, masks, params: PenaltyParams, eos: EosSpec, grid: Grid,
                    u=None) -> SolidResiduals:
    """Integrands of the solid-part residuals over cells fully outside ``Omega_t``.

    ``A1 = int a_xi theta^4``, ``A2 = int |S_omega|``, ``A3 = sum_k int
    zeta_omega |grad Y_k|``, ``A4 = int a_xi theta^3 (1 + |u|)`` and ``A5 =
    int kappa_nu |grad theta| / theta``.
    """
    solid = masks.solid
    if not np.any(solid):
        return SolidResiduals(0.0, 0.0, 0.0, 0.0, 0.0)
    theta = np.maximum(state.theta, THETA_FLOOR)
    if u is None:
        u = state.velocity()
    mu, eta, zeta, kappa, a_xi = mollified_coefficients(theta, masks.f_omega, masks.chi_nu,
                                                        masks.chi_xi, eos)
    dx, d = grid.dx, grid.dim
    S = stress_tensor(cell_gradient(u, dx, d, "wall"), mu, eta)
    gY = cell_gradient(state.Y, dx, d, "neumann")
    gth = cell_gradient(theta, dx, d, "neumann")
    speed = np.sqrt(np.sum(u * u, axis=0))
    dens = (a_xi * theta**4,
            np.sqrt(np.sum(S * S, axis=(0, 1))),
            zeta * np.sum(np.sqrt(np.sum(gY * gY, axis=1)), axis=0),
            a_xi * theta**3 * (1.0 + speed),
            kappa * np.sqrt(np.sum(gth * gth, axis=0)) / theta)
    return SolidResiduals(*(grid.integrate(np.where(solid, f, 0.0)) for f in dens))


class SpeciesReport(NamedTuple):
    Y_min: float
    Y_max: float
    sum_error: float
    G_integral: float
    G_rate: float


G0 = 2.0  # Hessian bound of G(Y) = sum Y_k^2


def species_monitor(state: SimState, grid: Grid, eos: EosSpec | None = None, masks=None,
                    net=None) -> SpeciesReport:
    """Composition bounds and the ``G(Y) = sum Y_k^2`` balance terms.

    ``G_rate = -int sum_k zeta_omega G0 |grad Y_k|^2 + int sum_k rho
    dG/dY_k sigma_k`` is the right-hand side the time derivative of ``int
    rho G(Y)`` may not exceed; it needs ``eos`` and ``masks``.
    """
    live = state.rho > RHO_FLOOR
    Y = state.Y
    if np.any(live):
        Yl = Y[:, live]
        ymin, ymax = float(Yl.min()), float(Yl.max())
        serr = float(np.max(np.abs(Yl.sum(axis=0) - 1.0)))
    else:
        ymin, ymax, serr = 0.0, 0.0, 0.0
    G = grid.integrate(np.where(live, state.rho * np.sum(Y * Y, axis=0), 0.0))
    rate = float("nan")
    if eos is not None and masks is not None:
        th = np.maximum(state.theta, THETA_FLOOR)
        _, _, zeta, _, _ = mollified_coefficients(th, masks.f_omega, masks.chi_nu, masks.chi_xi, eos)
        gY = cell_gradient(Y, grid.dx, grid.dim, "neumann")
        diss = grid.integrate(zeta * G0 * np.sum(gY * gY, axis=(0, 1)))
        prod = 0.0
        if net is not None and net.kind != "zero":
            sig = eval_production(th, Y, eos.gibbs(th), net)
            prod = grid.integrate(np.where(live, state.rho * np.sum(2.0 * Y * sig, axis=0), 0.0))
        rate = prod - diss
    return SpeciesReport(ymin, ymax, serr, G, rate)


# ---------------------------------------------------------------------------
# run monitor and budget report
# ---------------------------------------------------------------------------

COLUMNS = ("t", "mass", "kinetic", "internal", "delta_energy", "total_energy", "slip",
           "sigma_en_min", "sigma_en_median", "sink_cum", "exchange_cum", "work_rate",
           "mV", "m_dVdt", "A1", "A2", "A3", "A4", "A5", "Y_min", "Y_max", "Y_sum_err",
           "G_int", "G_rate", "clip_mass_cum", "solid_rho_max")


@dataclass
class BudgetReport:
    """Sampled time series; one row per monitor call, columns :data:`COLUMNS`."""

    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        i = COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def integral(self, name: str) -> float:
        """Trapezoidal time integral of a column."""
        t = self.column("t")
        return float(trapezoid(self.column(name), t)) if len(t) > 1 else 0.0

    def to_csv(self, header: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([repr(float(v)) for v in r])
        return buf.getvalue()


class Monitor:
    """Run callback filling a :class:`BudgetReport`.

    All step logs are folded in, including those of steps between samples,
    so cumulative columns stay exact for any sampling cadence.
    """

    def __init__(self, sim: Simulation):
        self.sim = sim
        self.report = BudgetReport()
        self._seen = 0
        self._sink = 0.0
        self._exchange = 0.0
        self._clip = 0.0

    def __call__(self, traj, state: SimState, lg=None):
        for entry in traj.logs[self._seen:]:
            self._sink += entry.sink
            self._exchange += (entry.penalty_ke + entry.chem_heat + entry.mask_energy
                               + entry.pin_energy + entry.repair_energy)
            self._clip += entry.clip_mass
        self._seen = len(traj.logs)
        self.report.rows.append(self.sample(state))

    def sample(self, state: SimState) -> tuple:
        sim, g, eos = self.sim, self.sim.grid, self.sim.eos
        t = state.t
        M = sim.masks(t)
        pr = sim.primitives(state)
        u = pr["u"]
        V = sim.V(t)
        mass = g.integrate(state.rho)
        kin = g.integrate(sim._kinetic(state.rho, state.m))
        internal = g.integrate(state.E)
        dlt = g.integrate(delta_energy_density(state.rho, sim.params))
        slip = 0.0
        if M.quad is not None and M.quad.size:
            Vq = sim.dom.V(t, M.quad.points.T)
            slip = slip_error(u, M.quad, g, Vq)
        ep = entropy_production_field(state, g, eos, M, sim.params, sim.net, u=u)

        # work of the domain velocity
        x = g.centers
        gV = velocity_gradient(sim.dom.V, t, x)
        divV = sum(gV[k, k] for k in range(g.dim))
        S = stress_tensor(cell_gradient(u, g.dx, g.dim, "wall"), pr["mu"], pr["eta"])
        conv = np.sum(state.m[:, None] * u[None, :] * gV, axis=(0, 1))
        work = -(conv - np.sum(S * gV, axis=(0, 1)) + pr["p"] * divV)
        if sim.net.kind != "zero":
            th = np.maximum(state.theta, THETA_FLOOR)
            sig = eval_production(th, state.Y, eos.gibbs(th), sim.net)
            live = state.rho > RHO_FLOOR
            work = work - np.where(live, state.rho * np.tensordot(eos.h, sig, axes=(0, 0)), 0.0)
        ht = 1e-6
        dVdt = (sim.dom.V(t + ht, x) - sim.dom.V(max(t - ht, 0.0), x)) / (t + ht - max(t - ht, 0.0))
        A = solid_residuals(state, M, sim.params, eos, g, u=u)
        sp = species_monitor(state, g, eos, M, sim.net)
        solid_rho = float(state.rho[M.solid].max()) if np.any(M.solid) else 0.0
        return (t, mass, kin, internal, dlt, kin + internal + dlt, slip, ep.min, ep.median_abs,
                self._sink, self._exchange, g.integrate(work), g.integrate(np.sum(state.m * V, axis=0)),
                g.integrate(np.sum(state.m * dVdt, axis=0)), *A, sp.Y_min, sp.Y_max,
                sp.sum_error, sp.G_integral, sp.G_rate, self._clip, solid_rho)


class BudgetResidual(NamedTuple):
    t0: np.ndarray
    t1: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    bookkeeping: np.ndarray
    sink: np.ndarray


def energy_budget(report: BudgetReport, eps: float) -> BudgetResidual:
    """Per-interval residuals of the penalized energy balance.

    ``lhs = Delta int(rho|u|^2/2 + E_m + delta rho^beta/(beta-1)) + int lambda
    theta^5 + (1/eps) int slip dt`` and ``rhs`` is the time integral of the
    domain-velocity work plus ``int d_t(rho u).V``; the balance requires
    ``residual = lhs - rhs <= tol``.  ``bookkeeping`` compares the energy
    change with the exchanges logged by the solver (zero up to rounding for
    the conservative scheme).
    """
    if len(report) < 2:
        raise ValueError("energy_budget needs at least two samples")
    c = report.column
    t = c("t")
    dt = np.diff(t)
    dE = np.diff(c("total_energy"))
    sink = np.diff(c("sink_cum"))
    trap = lambda f: 0.5 * dt * (f[1:] + f[:-1])
    slip = trap(c("slip")) / eps
    lhs = dE + sink + slip
    rhs = trap(c("work_rate")) + np.diff(c("mV")) - trap(c("m_dVdt"))
    book = dE - (np.diff(c("exchange_cum")) - sink)
    return BudgetResidual(t[:-1], t[1:], lhs, rhs, lhs - rhs, book, sink)


def species_inequality(report: BudgetReport) -> np.ndarray:
    """Per-interval ``d/dt int rho G - G_rate`` (must be at most a tolerance)."""
    t = report.column("t")
    G = report.column("G_int")
    rate = report.column("G_rate")
    return np.diff(G) / np.diff(t) - 0.5 * (rate[1:] + rate[:-1])


# ---------------------------------------------------------------------------
# running scenarios
# ---------------------------------------------------------------------------


def run_scenario(scenario, keep_every: int | None = None, every: int | None = None,
                 T_final: float | None = None):
    """Run a :class:`~penflow.scenario.Scenario` with a :class:`Monitor` attached.

    Returns ``(trajectory, report)``.
    """
    sim = scenario.simulation()
    s0 = scenario.initial_state(sim)
    mon = Monitor(sim)
    opts = scenario.run_opts
    traj = run(sim, s0, scenario.T_final if T_final is None else T_final, callbacks=(mon,),
               every=int(opts["every"]) if every is None else every,
               keep_every=int(opts["keep_every"]) if keep_every is None else keep_every)
    mon.report.meta = {"hash": scenario.hash, "name": scenario.name}
    return traj, mon.report


# ---------------------------------------------------------------------------
# weak residuals
# ---------------------------------------------------------------------------


def _psi(s, m):
    """Time factor ``(1-s)^2 s^m`` and its derivative."""
    v = (1.0 - s) ** 2 * s**m
    dv = -2.0 * (1.0 - s) * s**m + ((1.0 - s) ** 2 * m * s ** (m - 1) if m > 0 else 0.0)
    return v, dv


@dataclass(frozen=True)
class TestBasis:
    """Tensor products ``psi_m(t/T) eta_j(x)`` of time factors and cos^2 bumps.

    ``eta_j(x) = prod_i cos^2(pi (x_i - c_ji) / (2 r))`` for ``|x_i - c_ji| <
    r`` and zero elsewhere; it is C^1 with compact support.
    """

    centers: tuple
    radius: float
    T: float
    powers: tuple = (0, 1, 2)

    __test__ = False  # keep pytest from collecting this class

    def space(self, x: np.ndarray):
        """Values ``(J, ...)`` and gradients ``(J, d, ...)`` on points ``x`` of shape ``(d, ...)``."""
        c = np.asarray(self.centers, dtype=float)
        d = x.shape[0]
        vals, grads = [], []
        k = np.pi / (2.0 * self.radius)
        for cj in c:
            f, df = [], []
            for i in range(d):
                z = x[i] - cj[i]
                on = np.abs(z) < self.radius
                f.append(np.where(on, np.cos(k * z) ** 2, 0.0))
                df.append(np.where(on, -2.0 * k * np.cos(k * z) * np.sin(k * z), 0.0))
            vals.append(np.prod(f, axis=0))
            g = []
            for i in range(d):
                prod = df[i]
                for l in range(d):
                    if l != i:
                        prod = prod * f[l]
                g.append(prod)
            grads.append(np.stack(g))
        return np.stack(vals), np.stack(grads)

    @property
    def size(self) -> int:
        return len(self.centers) * len(self.powers)


def default_basis(grid: Grid, T: float, n_per_axis: int = 4, extent: float = 0.6,
                  powers=(0, 1, 2)) -> TestBasis:
    """Bumps on a lattice covering ``extent`` of the box half-width."""
    L = grid.half_width * extent
    c1 = np.linspace(-L, L, n_per_axis)
    r = (c1[1] - c1[0]) if n_per_axis > 1 else L
    centers = np.stack(np.meshgrid(*([c1] * grid.dim), indexing="ij")).reshape(grid.dim, -1).T
    return TestBasis(tuple(map(tuple, centers)), float(r), float(T), tuple(powers))


def renormalization_B(rho, b: Callable, B1: float = 1.0, n_nodes: int = 32):
    """``rho B(rho)`` with ``B(rho) = B1 + int_1^rho b(z)/z^2 dz``.

    The integral is computed by Gauss-Legendre quadrature in ``y = log z``;
    ``rho B(rho)`` is set to zero at ``rho = 0``.
    """
    rho = np.asarray(rho, dtype=float)
    pos = rho > 0
    r = np.where(pos, rho, 1.0)
    ly = np.log(r)
    xg, wg = np.polynomial.legendre.leggauss(n_nodes)
    y = 0.5 * ly[..., None] * (xg + 1.0)
    integral = 0.5 * ly * np.sum(wg * b(np.exp(y)) * np.exp(-y), axis=-1)
    B = B1 + integral
    return np.where(pos, r * B, 0.0), np.where(pos, B, 0.0)


def _default_b(z):
    return z / (1.0 + z)


def _equation_terms(equation, st, sim, grid, b, B1, u_fn):
    """Per-snapshot ``(Q_t, Q_x, Q_0)`` of the weak form ``-int(Q_t d_t phi + Q_x.grad phi + Q_0 phi)``.

    The first axis of every term enumerates scalar equations (momentum
    components or species).
    """
    d = grid.dim
    u = u_fn(st)
    if equation == "continuity":
        return st.rho[None], st.m[None], np.zeros((1,) + st.rho.shape)
    if equation == "renormalized":
        rB, B = renormalization_B(st.rho, b, B1)
        gu = cell_gradient(u, grid.dx, d, "wall")
        div = sum(gu[k, k] for k in range(d))
        bb = np.where(st.rho > 0, b(np.maximum(st.rho, 0.0)), 0.0)
        return rB[None], (B * st.m)[None], (-bb * div)[None]
    if sim is None:
        raise ValueError(f"the {equation} weak form needs a Simulation")
    pr = sim.primitives(st)
    if equation == "momentum":
        S = stress_tensor(cell_gradient(u, grid.dx, d, "wall"), pr["mu"], pr["eta"])
        Qx = st.m[:, None] * u[None] - S
        for i in range(d):
            Qx[i, i] = Qx[i, i] + pr["p"]
        return st.m, Qx, np.zeros_like(st.m)
    if equation == "species":
        Y = st.Y
        gY = cell_gradient(Y, grid.dx, d, "neumann")
        Qx = st.rhoY[:, None] * u[None] - pr["zeta"] * gY
        th = np.maximum(st.theta, THETA_FLOOR)
        sig = eval_production(th, Y, sim.eos.gibbs(th), sim.net)
        live = st.rho > RHO_FLOOR
        return st.rhoY, Qx, np.where(live, st.rho * sig, 0.0)
    raise ValueError(f"unknown equation {equation!r}")


def weak_residual(states: Sequence[SimState], equation: str, basis: TestBasis,
                  sim: Simulation | None = None, grid: Grid | None = None,
                  b: Callable = _default_b, B1: float = 1.0, u_fn: Callable | None = None,
                  n_gauss: int = 3, normal_tol: float = 1e-8) -> np.ndarray:
    """Space-time residuals of a weak form, one per (equation row, basis function).

    Fields are linear in time between consecutive snapshots; each interval
    uses ``n_gauss``-point Gauss-Legendre quadrature and space uses the
    cell-midpoint rule.  The initial term ``int Q_t(0) phi(0)`` is
    subtracted.  For ``momentum`` a basis function whose product with the
    interface normal exceeds ``normal_tol`` at any snapshot is excluded with
    a warning and its residual set to NaN.
    """
    grid = grid or (sim.grid if sim is not None else None)
    if grid is None:
        raise ValueError("weak_residual needs a grid or a Simulation")
    if len(states) < 2:
        raise ValueError("weak_residual needs at least two snapshots")
    if u_fn is None:
        if sim is not None:
            u_fn = lambda st: sim.primitives(st)["u"]
        else:
            u_fn = lambda st: st.velocity()
    eta, geta = basis.space(grid.centers)
    J = eta.shape[0]
    vol = grid.cell_volume
    eta_f = eta.reshape(J, -1)
    geta_f = geta.reshape(J, grid.dim, -1)

    a_list, c_list = [], []
    for st in states:
        Qt, Qx, Q0 = _equation_terms(equation, st, sim, grid, b, B1, u_fn)
        nrow = Qt.shape[0]
        Qt_f = Qt.reshape(nrow, -1)
        Qx_f = Qx.reshape(nrow, grid.dim, -1)
        Q0_f = Q0.reshape(nrow, -1)
        a = vol * Qt_f @ eta_f.T                                   # (rows, J)
        c = vol * (np.einsum("rdn,jdn->rj", Qx_f, geta_f) + Q0_f @ eta_f.T)
        a_list.append(a)
        c_list.append(c)
    a_arr = np.stack(a_list)                                       # (time, rows, J)
    c_arr = np.stack(c_list)
    times = np.array([st.t for st in states])
    T = basis.T
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    res = np.zeros((len(basis.powers),) + a_arr.shape[1:])
    for n in range(len(times) - 1):
        t0, t1 = times[n], times[n + 1]
        h = t1 - t0
        if h <= 0:
            continue
        for xq, wq in zip(xg, wg):
            lam = 0.5 * (xq + 1.0)
            tq = t0 + lam * h
            a = (1 - lam) * a_arr[n] + lam * a_arr[n + 1]
            c = (1 - lam) * c_arr[n] + lam * c_arr[n + 1]
            for k, m in enumerate(basis.powers):
                v, dv = _psi(tq / T, m)
                res[k] -= 0.5 * h * wq * (dv / T * a + v * c)
    for k, m in enumerate(basis.powers):
        v0, _ = _psi(0.0, m)
        res[k] -= v0 * a_arr[0]
    # (powers, rows, J) -> (rows, powers * J)
    out = np.moveaxis(res, 0, 1).reshape(res.shape[1], -1)

    if equation == "momentum" and sim is not None:
        bad = np.zeros((grid.dim, J), dtype=bool)
        for st in states:
            M = sim.masks(st.t)
            if M.quad is None or M.quad.size == 0:
                continue
            ev, _ = basis.space(M.quad.points.T)
            for i in range(grid.dim):
                bad[i] |= np.max(np.abs(ev * M.quad.normals[:, i]), axis=1) > normal_tol
        if np.any(bad):
            warnings.warn(f"{int(bad.sum())} momentum test functions violate phi.n = 0 on the "
                          "interface and are excluded", RuntimeWarning, stacklevel=2)
            out = out.reshape(grid.dim, len(basis.powers), J)
            out = np.where(bad[:, None, :], np.nan, out).reshape(grid.dim, -1)
    return out


def advect_density(grid: Grid, rho0: np.ndarray, velocity: Sequence[float], T: float,
                   cfl: float = 0.4) -> list:
    """Transport ``rho0`` by a constant velocity with the solver's flux and Heun stepping.

    All other fields are frozen.  Returns one snapshot per step, as
    :class:`SimState` objects with ``m = rho u``.
    """
    u = np.asarray(velocity, dtype=float).reshape((-1,) + (1,) * grid.dim)
    speed = float(np.max(np.abs(u)))
    dt_max = cfl * grid.dx / speed if speed > 0 else T
    nsteps = max(1, int(np.ceil(T / dt_max - 1e-12)))
    dt = T / nsteps

    def rhs(r):
        out = np.zeros_like(r)
        for ax in range(grid.dim):
            L = r[_sl(r.ndim, ax, slice(0, -1))]
            R = r[_sl(r.ndim, ax, slice(1, None))]
            a = abs(float(u[ax].flat[0]))
            F = rusanov_flux(L, R, L * u[ax].flat[0], R * u[ax].flat[0], a)
            zero = np.zeros_like(r[_sl(r.ndim, ax, slice(0, 1))])
            out -= _div_faces(np.concatenate([zero, F, zero], axis=ax), ax, grid.dx)
        return out

    def snap(t, r):
        z = np.zeros_like(r)
        return SimState(t, r.copy(), r * u, z, r[None].copy(), z + 1.0, np.ones((1,) + r.shape))

    r = np.array(rho0, dtype=float)
    out = [snap(0.0, r)]
    for n in range(nsteps):
        r1 = r + dt * rhs(r)
        r = 0.5 * (r + r1 + dt * rhs(r1))
        out.append(snap((n + 1) * dt, r))
    return out


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------


def fit_loglog(x, y):
    """Least-squares slope and ``R^2`` of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    slope, icpt = np.polyfit(lx, ly, 1)
    pred = slope * lx + icpt
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


MONITORS = {
    "slip": lambda rep: rep.integral("slip"),
    "delta_energy": lambda rep: float(rep.column("delta_energy")[-1]),
    **{f"A{i}": (lambda rep, i=i: rep.integral(f"A{i}")) for i in range(1, 6)},
}


@dataclass
class SweepResult:
    param: str
    values: list
    monitors: dict            # monitor name -> list of values
    hashes: list
    base_hash: str
    fits: dict = field(default_factory=dict)  # monitor name -> (slope, r2)

    def monotone(self, name: str) -> bool:
        """Strictly monotone in the parameter, in the direction of the fitted slope."""
        order = np.argsort(self.values)
        y = np.asarray(self.monitors[name], dtype=float)[order]
        diffs = np.diff(y)
        slope = self.fits[name][0]
        return bool(np.all(diffs > 0) if slope >= 0 else np.all(diffs < 0))

    def table_rows(self):
        for i, v in enumerate(self.values):
            yield [self.param, repr(float(v))] + [repr(float(self.monitors[k][i]))
                                                  for k in self.monitors] + [self.hashes[i],
                                                                             self.base_hash]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# base_config_hash: {self.base_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["param", "value"] + list(self.monitors) + ["config_hash", "base_hash"])
        for row in self.table_rows():
            w.writerow(row)
        return buf.getvalue()

    def slope_table(self) -> str:
        buf = io.StringIO()
        buf.write(f"# base_config_hash: {self.base_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["param", "monitor", "slope", "r2", "monotone"])
        for k, (s, r2) in self.fits.items():
            w.writerow([self.param, k, repr(s), repr(r2), self.monotone(k)])
        return buf.getvalue()


def read_sweep_table(text: str) -> list:
    """Parse a sweep CSV; rows whose ``base_hash`` differs from the header are an error."""
    lines = text.splitlines()
    base = None
    body = []
    for ln in lines:
        if ln.startswith("# base_config_hash:"):
            base = ln.split(":", 1)[1].strip()
        elif not ln.startswith("#"):
            body.append(ln)
    rows = list(csv.DictReader(body))
    bad = [r for r in rows if r.get("base_hash") != base]
    if bad:
        raise ValueError(f"{len(bad)} sweep rows carry a base hash other than {base}")
    return rows


def _sweep_worker(args):
    from .scenario import build_scenario, apply_overrides
    config, override, names = args
    sc = build_scenario(apply_overrides(config, [override]))
    _, rep = run_scenario(sc, keep_every=None, every=1)
    return sc.hash, {k: MONITORS[k](rep) for k in names}


def convergence_study(scenario, param: str, values: Sequence[float], monitors=("slip",),
                      workers: int = 1) -> SweepResult:
    """Run ``scenario`` once per value of the dotted ``param`` and fit log-log rates.

    ``monitors`` name entries of :data:`MONITORS`.  With ``workers > 1`` the
    runs execute in separate processes; results are gathered in input
    order, so the output does not depend on scheduling.
    """
    if len(values) < 4:
        raise ValueError("a sweep needs at least four parameter values")
    unknown = [m for m in monitors if m not in MONITORS]
    if unknown:
        raise ValueError(f"unknown monitors {unknown}; available {sorted(MONITORS)}")
    jobs = [(scenario.config, f"{param}={float(v)!r}", tuple(monitors)) for v in values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    res = SweepResult(param, [float(v) for v in values], {k: [] for k in monitors},
                      [h for h, _ in results], scenario.hash)
    for _, vals in results:
        for k in monitors:
            res.monitors[k].append(vals[k])
    for k in monitors:
        y = np.asarray(res.monitors[k])
        if np.all(y > 0):
            res.fits[k] = fit_loglog(res.values, y)
        else:
            res.fits[k] = (float("nan"), float("nan"))
        log.info("sweep %s: monitor %s slope %.4g (R^2 %.4g)", param, k, *res.fits[k])
    return res
