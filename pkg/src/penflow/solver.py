"""Finite-volume integration of the penalized system on the reference box.

One step of :class:`Simulation` performs, in order:

1. an explicit Heun (SSP-RK2) update of mass, momentum, total energy and
   partial densities with a local Lax-Friedrichs (Rusanov) flux, explicit
   viscous stresses and species diffusion;
2. a mask rebuild at the new time (moving domains only), keeping the
   temperature fixed where the radiation mask changes;
3. removal of fluid stranded in cells that the interface has fully left
   (cut-cell mode);
4. exponential relaxation of the normal slip ``(u - V).n`` in interface
   cells, which integrates the ``1/eps`` penalty exactly;
5. a backward-Euler solve for heat conduction and the ``lambda theta^5``
   sink, which are stiff in the solid region;
6. clipping and renormalisation of the mass fractions;
7. pinning of the velocity to ``V`` in near-vacuum cells.

The matter energy ``E_m = rho e_M + a_xi theta^4`` is the stored energy
variable; the explicit stage evolves ``E_m + rho |u|^2 / 2 + delta
rho^beta / (beta - 1)`` so that the transport part is conservative.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .chemistry import ReactionNetwork, eval_production
from .domain import Masks, MovingDomain, build_masks
from .grid import Grid
from .penalty import PenaltyParams, delta_energy_density, mollified_coefficients
from .thermo import EosSpec

log = logging.getLogger(__name__)

RHO_FLOOR = 1e-14
THETA_FLOOR = 1e-12


class SolverError(RuntimeError):
    """Raised on non-physical or non-finite solver states."""


@dataclass
class SimState:
    """Conservative cell fields at one time level.

    ``E`` is the matter and radiation energy density ``rho e_M + a_xi
    theta^4``.  ``theta`` caches the temperature recovered from ``E`` and
    ``Y_fallback`` holds the composition used where the density vanishes.
    """

    t: float
    rho: np.ndarray
    m: np.ndarray
    E: np.ndarray
    rhoY: np.ndarray
    theta: np.ndarray
    Y_fallback: np.ndarray

    def copy(self) -> "SimState":
        return SimState(self.t, *(getattr(self, f.name).copy() for f in fields(self)[1:]))

    @property
    def Y(self) -> np.ndarray:
        safe = np.where(self.rho > RHO_FLOOR, self.rho, 1.0)
        return np.where(self.rho > RHO_FLOOR, self.rhoY / safe, self.Y_fallback)

    def velocity(self, V: np.ndarray | None = None) -> np.ndarray:
        safe = np.where(self.rho > RHO_FLOOR, self.rho, 1.0)
        u = np.where(self.rho > RHO_FLOOR, self.m / safe, 0.0)
        if V is not None:
            u = np.where(self.rho > RHO_FLOOR, u, V)
        return u


@dataclass
class StepLog:
    """Energy and mass exchanged by the non-conservative parts of one step."""

    t: float = 0.0
    dt: float = 0.0
    sink: float = 0.0
    penalty_ke: float = 0.0
    chem_heat: float = 0.0
    mask_energy: float = 0.0
    pin_energy: float = 0.0
    repair_energy: float = 0.0
    clip_mass: float = 0.0
    dead_mass: float = 0.0
    newton_iters: int = 0


# ---------------------------------------------------------------------------
# primitive recovery
# ---------------------------------------------------------------------------


def invert_energy(E, rho, a_loc, eos: EosSpec, tol: float = 1e-13, max_iter: int = 50):
    """Temperature from ``E = rho e_M(rho, theta) + a_loc theta^4``.

    Bracketed Newton iteration starting from an upper bound; the energy is
    convex and increasing in ``theta``, so the iterates decrease
    monotonically.  Cells without thermal energy get ``THETA_FLOOR``.
    """
    E = np.asarray(E, dtype=float)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), E.shape)
    a_loc = np.broadcast_to(np.asarray(a_loc, dtype=float), E.shape)
    cl = eos.closure
    cold = 1.5 * eos.p_inf * rho ** (5.0 / 3.0)
    Eth = E - cold
    theta = np.full(E.shape, THETA_FLOOR)
    live = Eth > cl.volumetric_energy(rho, THETA_FLOOR) - cold + a_loc * THETA_FLOOR**4
    if not np.any(live):
        return theta
    r, a, e, et = rho[live], a_loc[live], E[live], Eth[live]
    with np.errstate(divide="ignore", over="ignore"):
        hi = np.minimum(np.where(r > 0, et / (1.5 * np.where(r > 0, r, 1.0)), np.inf),
                        np.where(a > 0, (et / np.where(a > 0, a, 1.0)) ** 0.25, np.inf))
    lo = np.full_like(hi, THETA_FLOOR)
    # generic closures: expand the bracket until it holds
    for _ in range(60):
        f_hi = cl.volumetric_energy(r, hi) + a * hi**4 - e
        short = f_hi < 0
        if not np.any(short):
            break
        hi = np.where(short, 2.0 * hi, hi)
    th = hi.copy()
    for it in range(max_iter):
        f = cl.volumetric_energy(r, th) + a * th**4 - e
        df = cl.volumetric_energy_dtheta(r, th) + 4.0 * a * th**3
        hi = np.where(f > 0, th, hi)
        lo = np.where(f < 0, th, lo)
        step = f / df
        new = th - step
        out = (new < lo) | (new > hi) | ~np.isfinite(new)
        new = np.where(out, 0.5 * (lo + hi), new)
        # a residual at rounding level of E also ends the iteration: E - cold
        # cancels badly in cold dense cells and the iterates then only jitter
        done = (np.abs(new - th) <= tol * np.abs(new)) | (np.abs(f) <= 8 * np.finfo(float).eps * np.abs(e))
        th = new
        if np.all(done):
            break
    else:
        bad = np.argmax(np.abs(step) / th)
        raise SolverError(
            f"temperature recovery did not converge in {max_iter} iterations: "
            f"rho={r[bad]:.6e}, E={e[bad]:.6e}, a_xi={a[bad]:.3e}, theta={th[bad]:.6e}")
    theta[live] = np.maximum(th, THETA_FLOOR)
    return theta


def recover_primitive(state: SimState, eos: EosSpec, masks: Masks, V: np.ndarray | None = None,
                      rho_floor: float = RHO_FLOOR):
    """Return ``(u, theta)``; vacuum cells take the domain velocity ``V`` (or 0)."""
    a_loc = masks.chi_xi * eos.a
    theta = invert_energy(state.E, state.rho, a_loc, eos)
    safe = np.where(state.rho >= rho_floor, state.rho, 1.0)
    u = np.where(state.rho >= rho_floor, state.m / safe, 0.0 if V is None else V)
    return u, theta


def matter_energy(rho, theta, a_loc, eos: EosSpec):
    return eos.closure.volumetric_energy(rho, theta) + a_loc * theta**4


# ---------------------------------------------------------------------------
# stencil helpers
# ---------------------------------------------------------------------------


def _sl(ndim, axis, s):
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def cell_gradient(f: np.ndarray, dx: float, dim: int, bc: str) -> np.ndarray:
    """Central-difference gradient with ghost cells; output axis -dim-1 is direction.

    ``bc='wall'`` mirrors with sign change (zero Dirichlet at the box
    boundary), ``bc='neumann'`` mirrors the value.
    """
    lead = f.ndim - dim
    out = []
    for ax in range(dim):
        a = lead + ax
        first = f[_sl(f.ndim, a, slice(0, 1))]
        last = f[_sl(f.ndim, a, slice(-1, None))]
        sign = -1.0 if bc == "wall" else 1.0
        g = np.concatenate([sign * first, f, sign * last], axis=a)
        out.append((g[_sl(f.ndim, a, slice(2, None))] - g[_sl(f.ndim, a, slice(0, -2))]) / (2 * dx))
    return np.stack(out, axis=lead)


def rusanov_flux(qL, qR, fL, fR, alpha):
    """Local Lax-Friedrichs flux for conserved ``q`` with physical flux ``f``."""
    return 0.5 * (fL + fR) - 0.5 * alpha * (qR - qL)


def _div_faces(F: np.ndarray, axis: int, dx: float) -> np.ndarray:
    return (F[_sl(F.ndim, axis, slice(1, None))] - F[_sl(F.ndim, axis, slice(0, -1))]) / dx


def _pad_walls(F_int, F_left, F_right, axis):
    return np.concatenate([F_left, F_int, F_right], axis=axis)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


@dataclass
class Simulation:
    """Static ingredients of a run and the single-step operator."""

    grid: Grid
    dom: MovingDomain
    eos: EosSpec
    net: ReactionNetwork
    params: PenaltyParams
    cut_cell: bool = True
    thin_fraction: float = 0.02
    rho_ref: float = 1.0
    cfl: float = 0.4
    rebuild_masks: bool = True
    _mask_cache: dict = field(default_factory=dict, repr=False)

    @property
    def rho_thin(self) -> float:
        return self.thin_fraction * self.rho_ref

    # -- masks and geometry -------------------------------------------------

    def masks(self, t: float) -> Masks:
        if self.dom.frozen or not self.rebuild_masks:
            key = 0.0
        else:
            key = float(t)
        if key not in self._mask_cache:
            if len(self._mask_cache) > 4:
                self._mask_cache.clear()
            self._mask_cache[key] = build_masks(key if not self.dom.frozen else 0.0,
                                                self.grid, self.dom, self.params)
        return self._mask_cache[key]

    def V(self, t: float) -> np.ndarray:
        return self.dom.velocity(t, self.grid.centers)

    # -- state construction -------------------------------------------------

    def make_state(self, t, rho, u, theta, Y) -> SimState:
        masks = self.masks(t)
        rho = np.array(rho, dtype=float)
        theta = np.array(theta, dtype=float)
        Y = np.array(Y, dtype=float)
        u = np.array(u, dtype=float)
        a_loc = masks.chi_xi * self.eos.a
        E = matter_energy(rho, theta, a_loc, self.eos)
        return SimState(t, rho, rho * u, E, rho * Y, theta, Y.copy())

    # -- primitives -----------------------------------------------------------

    def _prims(self, rho, m, Em, rhoY, Yfb, masks, t, theta_prev, log_: StepLog | None, dt_w):
        eos, g = self.eos, self.grid
        a_loc = masks.chi_xi * eos.a
        theta = invert_energy(Em, rho, a_loc, eos)
        cold = 1.5 * eos.p_inf * rho ** (5.0 / 3.0)
        bad = (rho > RHO_FLOOR) & (Em - cold <= 0.0)
        if np.any(bad):
            fixed = matter_energy(rho, theta_prev, a_loc, eos)
            if log_ is not None:
                log_.repair_energy += dt_w * g.integrate(np.where(bad, fixed - Em, 0.0))
            Em = np.where(bad, fixed, Em)
            theta = np.where(bad, theta_prev, theta)
        V = self.V(t)
        pinned = rho < self.rho_thin
        safe = np.where(rho > RHO_FLOOR, rho, 1.0)
        u = np.where(pinned, V, m / safe)
        Y = np.where(rho > RHO_FLOOR, rhoY / safe, Yfb)
        p = (eos.closure.pressure(rho, theta) + a_loc / 3.0 * theta**4
             + self.params.delta * rho**self.params.beta)
        rho_eff = np.maximum(rho, self.rho_thin)
        c = np.sqrt(5.0 / 3.0 * p / rho_eff
                    + self.params.delta * self.params.beta * rho_eff ** (self.params.beta - 1))
        mu, eta, zeta, kappa, _ = mollified_coefficients(theta, masks.f_omega, masks.chi_nu,
                                                         masks.chi_xi, eos)
        return dict(theta=theta, Em=Em, u=u, Y=Y, p=p, c=c, mu=mu, eta=eta, zeta=zeta,
                    kappa=kappa, pinned=pinned, a_loc=a_loc)

    def primitives(self, state: SimState) -> dict:
        """Primitive and transport fields of ``state`` as seen by the flux stage."""
        return self._prims(state.rho, state.m, state.E, state.rhoY, state.Y_fallback,
                           self.masks(state.t), state.t, state.theta, None, 0.0)

    # -- explicit right-hand side ----------------------------------------------

    def _rhs(self, rho, m, Etot, rhoY, pr, masks):
        g = self.grid
        d, dx = g.dim, g.dx
        u, p, c, Y = pr["u"], pr["p"], pr["c"], pr["Y"]
        mu, eta, zeta = pr["mu"], pr["eta"], pr["zeta"]
        pinned = pr["pinned"]
        drho = np.zeros_like(rho)
        dm = np.zeros_like(m)
        dE = np.zeros_like(Etot)
        dY = np.zeros_like(rhoY)
        grad_u = cell_gradient(u, dx, d, "wall")  # (i, j, ...) = du_i/dx_j
        div_u = sum(grad_u[k, k] for k in range(d))
        for ax in range(d):
            L = lambda f, lead=0: f[_sl(f.ndim, lead + ax, slice(0, -1))]
            R = lambda f, lead=0: f[_sl(f.ndim, lead + ax, slice(1, None))]
            un = u[ax]
            uL, uR = L(un), R(un)
            alpha = np.maximum(np.abs(uL) + L(c), np.abs(uR) + R(c))
            Fr = rusanov_flux(L(rho), R(rho), L(rho) * uL, R(rho) * uR, alpha)
            Fm = rusanov_flux(L(m, 1), R(m, 1), L(m, 1) * uL, R(m, 1) * uR, alpha)
            Fm[ax] += 0.5 * (L(p) + R(p))
            FE = rusanov_flux(L(Etot), R(Etot), (L(Etot) + L(p)) * uL, (R(Etot) + R(p)) * uR, alpha)
            FY = rusanov_flux(L(rhoY, 1), R(rhoY, 1), L(rhoY, 1) * uL, R(rhoY, 1) * uR, alpha)

            # viscous stress on interior faces
            gface = 0.5 * (L(grad_u, 2) + R(grad_u, 2))
            gface[:, ax] = (R(u, 1) - L(u, 1)) / dx
            divf = sum(gface[k, k] for k in range(d))
            muf = 0.5 * (L(mu) + R(mu))
            etaf = 0.5 * (L(eta) + R(eta))
            S_ax = muf * (gface[:, ax] + gface[ax, :])
            S_ax[ax] += (etaf - 2.0 / 3.0 * muf) * divf
            uf = 0.5 * (L(u, 1) + R(u, 1))
            Fm -= S_ax
            FE -= np.sum(S_ax * uf, axis=0)

            # species diffusion, suppressed next to near-vacuum cells
            zf = 0.5 * (L(zeta) + R(zeta))
            both = ~(L(pinned) | R(pinned))
            FY -= np.where(both, zf, 0.0) * (R(Y, 1) - L(Y, 1)) / dx

            if self.cut_cell:
                op = masks.face_open[ax]
                Fr = np.where(op, Fr, 0.0)
                Fm = np.where(op, Fm, 0.0)
                FE = np.where(op, FE, 0.0)
                FY = np.where(op, FY, 0.0)

            # no-slip, adiabatic, impermeable outer walls
            first = _sl(rho.ndim, ax, slice(0, 1))
            last = _sl(rho.ndim, ax, slice(-1, None))
            zr = np.zeros_like(rho[first])
            wall = []
            for sl, sgn in ((first, 1.0), (last, -1.0)):
                ub = u[(slice(None),) + sl]
                dn = sgn * 2.0 * ub / dx  # d/dx_ax of u at the wall, where u = 0
                Sw = mu[sl] * dn
                Sw[ax] += (eta[sl] + mu[sl] / 3.0) * dn[ax]
                Fw = -Sw
                Fw[ax] += p[sl]
                wall.append(Fw)
            Fm = np.concatenate([wall[0], Fm, wall[1]], axis=1 + ax)
            drho -= _div_faces(_pad_walls(Fr, zr, zr, ax), ax, dx)
            dE -= _div_faces(_pad_walls(FE, zr, zr, ax), ax, dx)
            zY = np.zeros_like(rhoY[(slice(None),) + first])
            dY -= _div_faces(_pad_walls(FY, zY, zY, 1 + ax), 1 + ax, dx)
            dm -= _div_faces(Fm, 1 + ax, dx)

        # chemistry
        live = rho > RHO_FLOOR
        chem = 0.0
        if self.net.kind != "zero" and np.any(live):
            th = np.maximum(pr["theta"], THETA_FLOOR)
            sig = eval_production(th, Y, self.eos.gibbs(th), self.net)
            src = np.where(live, rho * sig, 0.0)
            dY += src
            heat = -np.tensordot(self.eos.h, src, axes=(0, 0))
            dE += heat
            chem = g.integrate(heat)
        return drho, dm, dE, dY, chem

    # -- energy helpers ---------------------------------------------------------

    def _kinetic(self, rho, m):
        safe = np.where(rho > RHO_FLOOR, rho, 1.0)
        return np.where(rho > RHO_FLOOR, 0.5 * np.sum(m * m, axis=0) / safe, 0.0)

    def _Edelta(self, rho):
        return delta_energy_density(np.maximum(rho, 0.0), self.params)

    # -- time step ---------------------------------------------------------------

    def compute_dt(self, state: SimState, cfl: float | None = None) -> float:
        cfl = self.cfl if cfl is None else cfl
        if not 0 < cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        masks = self.masks(state.t)
        pr = self._prims(state.rho, state.m, state.E, state.rhoY, state.Y_fallback, masks,
                         state.t, state.theta, None, 0.0)
        return compute_dt(state, self.grid, self.params, self.eos, cfl, pr,
                          np.max(np.abs(self.V(state.t))), self.rho_thin)

    def step(self, state: SimState, dt: float) -> tuple[SimState, StepLog]:
        g, eos, params = self.grid, self.eos, self.params
        lg = StepLog(t=state.t + dt, dt=dt)
        t0, t1 = state.t, state.t + dt
        M0 = self.masks(t0)

        rho0, m0, rhoY0 = state.rho, state.m, state.rhoY
        pr0 = self._prims(rho0, m0, state.E, rhoY0, state.Y_fallback, M0, t0, state.theta, lg, 1.0)
        E0 = pr0["Em"] + self._kinetic(rho0, m0) + self._Edelta(rho0)
        u_old = pr0["u"]

        # Heun stage 1
        k1 = self._rhs(rho0, m0, E0, rhoY0, pr0, M0)
        rho1 = rho0 + dt * k1[0]
        m1 = m0 + dt * k1[1]
        E1 = E0 + dt * k1[2]
        Y1 = rhoY0 + dt * k1[3]
        self._check(rho1, m1, E1, Y1, "stage 1", t1)
        rho1 = np.maximum(rho1, 0.0)
        Em1 = E1 - self._kinetic(rho1, m1) - self._Edelta(rho1)
        pr1 = self._prims(rho1, m1, Em1, Y1, state.Y_fallback, M0, t1, pr0["theta"], lg, 0.5)
        E1 = pr1["Em"] + self._kinetic(rho1, m1) + self._Edelta(rho1)
        k2 = self._rhs(rho1, m1, E1, Y1, pr1, M0)
        rho = 0.5 * (rho0 + rho1 + dt * k2[0])
        m = 0.5 * (m0 + m1 + dt * k2[1])
        Et = 0.5 * (E0 + E1 + dt * k2[2])
        rhoY = 0.5 * (rhoY0 + Y1 + dt * k2[3])
        lg.chem_heat = 0.5 * dt * (k1[4] + k2[4])
        self._check(rho, m, Et, rhoY, "stage 2", t1)
        rho = np.maximum(rho, 0.0)
        Em = Et - self._kinetic(rho, m) - self._Edelta(rho)
        a0 = M0.chi_xi * eos.a
        theta = invert_energy(Em, rho, a0, eos)
        cold = 1.5 * eos.p_inf * rho ** (5.0 / 3.0)
        bad = (rho > RHO_FLOOR) & (Em - cold <= 0.0)
        if np.any(bad):
            fixed = matter_energy(rho, pr0["theta"], a0, eos)
            lg.repair_energy += g.integrate(np.where(bad, fixed - Em, 0.0))
            Em = np.where(bad, fixed, Em)
            theta = np.where(bad, pr0["theta"], theta)

        # masks at the new time; the temperature is kept where a_xi changes
        M1 = self.masks(t1)
        if M1 is not M0:
            a1 = M1.chi_xi * eos.a
            dEm = (a1 - a0) * theta**4
            lg.mask_energy = g.integrate(dEm)
            Em = Em + dEm

        if self.cut_cell and not self.dom.frozen:
            rho, m, Em, rhoY, theta = self._clear_dead(rho, m, Em, rhoY, theta, M1, lg)

        # exact relaxation of the normal slip in the interface band
        V0, V1 = self.V(t0), self.V(t1)
        m, lg.penalty_ke = self._penalty(rho, m, u_old, V0, V1, M1, dt)

        # implicit conduction and thermal sink
        Em, theta, lg.sink, lg.newton_iters = self._implicit_heat(rho, Em, theta, M1, dt)

        # composition projection
        rhoY, Yfb, lg.clip_mass = self._project_species(rho, rhoY, state.Y_fallback)

        # velocity pin in near-vacuum cells
        thin = rho < self.rho_thin
        if np.any(thin):
            ke_before = self._kinetic(rho, m)
            m = np.where(thin, rho * V1, m)
            lg.pin_energy = g.integrate(self._kinetic(rho, m) - ke_before)

        theta = invert_energy(Em, rho, M1.chi_xi * eos.a, eos)
        new = SimState(t1, rho, m, Em, rhoY, theta, Yfb)
        self._check(new.rho, new.m, new.E, new.rhoY, "end of step", t1)
        return new, lg

    # -- split operators ----------------------------------------------------------

    def _check(self, rho, m, E, rhoY, where, t):
        for name, arr in (("rho", rho), ("m", m), ("E", E), ("rhoY", rhoY)):
            bad = ~np.isfinite(arr)
            if np.any(bad):
                idx = np.unravel_index(np.argmax(bad), arr.shape)
                raise SolverError(f"non-finite {name} at index {idx} ({where}, t={t:.6g})")
        if np.min(rho) < -1e-13:
            idx = np.unravel_index(np.argmin(rho), rho.shape)
            raise SolverError(f"negative density {rho[idx]:.3e} at cell {idx} ({where}, t={t:.6g})")

    def _neighbors(self):
        """Face-adjacent neighbour offsets as (axis, shift) pairs."""
        return [(ax, s) for ax in range(self.grid.dim) for s in (-1, 1)]

    def _clear_dead(self, rho, m, Em, rhoY, theta, masks: Masks, lg: StepLog):
        """Move fluid out of cells whose faces are all closed, conserving totals."""
        dead = masks.dead
        eos = self.eos
        a_loc = masks.chi_xi * eos.a
        for _ in range(4):
            src = dead & (rho > 0)
            if not np.any(src):
                break
            lg.dead_mass += self.grid.integrate(np.where(src, rho, 0.0))
            # pick the face neighbour with the smallest level
            best_level = np.full(rho.shape, np.inf)
            target = np.zeros((self.grid.dim,) + rho.shape, dtype=int)
            idx = np.indices(rho.shape)
            for ax, s in self._neighbors():
                nb = idx.copy()
                nb[ax] = np.clip(nb[ax] + s, 0, self.grid.n - 1)
                lev = masks.level[tuple(nb)]
                better = lev < best_level
                best_level = np.where(better, lev, best_level)
                target = np.where(better, nb, target)
            E_tot = Em + self._kinetic(rho, m) + self._Edelta(rho)
            rad = a_loc * theta**4
            moved_E = np.where(src, E_tot - rad, 0.0)
            src_idx = np.nonzero(src)
            tgt = tuple(target[k][src_idx] for k in range(self.grid.dim))
            tgt_flat = np.ravel_multi_index(tgt, rho.shape)
            shape = rho.shape

            def gather(arr_flat, vals):
                np.add.at(arr_flat, tgt_flat, vals)

            rho_f = rho.ravel().copy()
            Etot_f = E_tot.ravel().copy()
            gather(rho_f, rho[src_idx])
            gather(Etot_f, moved_E[src_idx])
            m_f = m.reshape(m.shape[0], -1).copy()
            Y_f = rhoY.reshape(rhoY.shape[0], -1).copy()
            for k in range(m.shape[0]):
                np.add.at(m_f[k], tgt_flat, m[k][src_idx])
            for k in range(rhoY.shape[0]):
                np.add.at(Y_f[k], tgt_flat, rhoY[k][src_idx])
            src_flat = np.ravel_multi_index(src_idx, shape)
            rho_f[src_flat] = 0.0
            m_f[:, src_flat] = 0.0
            Y_f[:, src_flat] = 0.0
            Etot_f[src_flat] = rad.ravel()[src_flat]
            rho = rho_f.reshape(shape)
            m = m_f.reshape(m.shape)
            rhoY = Y_f.reshape(rhoY.shape)
            Em = Etot_f.reshape(shape) - self._kinetic(rho, m) - self._Edelta(rho)
            theta = invert_energy(Em, rho, a_loc, eos)
        return rho, m, Em, rhoY, theta

    def _penalty(self, rho, m, u_old, V0, V1, masks: Masks, dt):
        band = (masks.delta > 0) & (rho >= self.rho_thin)
        if not np.any(band):
            return m, 0.0
        n = masks.normal
        safe = np.where(rho > RHO_FLOOR, rho, 1.0)
        u_pred = m / safe
        w_old = np.sum((u_old - V0) * n, axis=0)
        w_pred = np.sum((u_pred - V1) * n, axis=0)
        tau = np.where(band, rho * self.params.eps / np.where(band, masks.delta, 1.0), 1.0)
        w_new = relax_normal_slip(w_old, (w_pred - w_old) / dt, tau, dt)
        u_new = u_pred + np.where(band, w_new - w_pred, 0.0) * n
        m_new = np.where(band, rho * u_new, m)
        dke = self.grid.integrate(self._kinetic(rho, m_new) - self._kinetic(rho, m))
        return m_new, dke

    def _face_conductance(self, kappa):
        """Harmonic-mean face conductances ``kappa_f / dx^2`` per axis."""
        dx2 = self.grid.dx**2
        out = []
        for ax in range(self.grid.dim):
            kL = kappa[_sl(kappa.ndim, ax, slice(0, -1))]
            kR = kappa[_sl(kappa.ndim, ax, slice(1, None))]
            out.append(2.0 * kL * kR / np.maximum(kL + kR, 1e-300) / dx2)
        return out

    def _laplacian(self, cond):
        shape = self.grid.shape
        N = int(np.prod(shape))
        idx = np.arange(N).reshape(shape)
        rows, cols, vals = [], [], []
        diag = np.zeros(N)
        for ax, c in enumerate(cond):
            i = idx[_sl(len(shape), ax, slice(0, -1))].ravel()
            j = idx[_sl(len(shape), ax, slice(1, None))].ravel()
            c = c.ravel()
            rows += [i, j]
            cols += [j, i]
            vals += [c, c]
            np.add.at(diag, i, -c)
            np.add.at(diag, j, -c)
        rows.append(np.arange(N))
        cols.append(np.arange(N))
        vals.append(diag)
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(N, N))

    def _implicit_heat(self, rho, Estar, theta_star, masks: Masks, dt):
        """Backward Euler for ``E_m(theta) = E* + dt (div(kappa grad theta) - lambda theta^5)``."""
        eos, lam = self.eos, self.params.lam
        a_loc = masks.chi_xi * eos.a
        _, _, _, kappa, _ = mollified_coefficients(theta_star, masks.f_omega, masks.chi_nu,
                                                   masks.chi_xi, eos)
        cond = self._face_conductance(kappa)
        Lap = self._laplacian(cond)
        shape = rho.shape
        r, a, Es = rho.ravel(), a_loc.ravel(), Estar.ravel()
        th_s = theta_star.ravel()

        # pointwise initial guess: neighbours lagged, solved by log-space bisection
        D = -Lap.diagonal()
        off = Lap @ th_s + D * th_s
        rhs = Es + dt * off
        lo = np.full_like(Es, np.log(THETA_FLOOR))
        hi = np.log(np.maximum(th_s, THETA_FLOOR)) + 3.0

        def G_point(z):
            th = np.exp(z)
            return matter_energy(r, th, a, eos) + dt * (lam * th**5 + D * th) - rhs

        for _ in range(8):
            short = G_point(hi) < 0
            if not np.any(short):
                break
            hi = np.where(short, hi + 5.0, hi)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            pos = G_point(mid) > 0
            hi = np.where(pos, mid, hi)
            lo = np.where(pos, lo, mid)
        th = np.exp(hi)

        it = 0
        for it in range(1, 101):
            Eth = matter_energy(r, th, a, eos)
            G = Eth - Es - dt * (Lap @ th - lam * th**5)
            dE = eos.closure.volumetric_energy_dtheta(r, th) + 4.0 * a * th**3
            J = sparse.diags(dE + 5.0 * dt * lam * th**4) - dt * Lap
            delta = splinalg.spsolve(J.tocsc(), -G)
            new = np.maximum(th + delta, 0.1 * th)
            new = np.maximum(new, THETA_FLOOR)
            conv = np.max(np.abs(new - th) / new)
            th = new
            if conv < 1e-12:
                break
        else:
            raise SolverError("implicit heat solve did not converge in 100 Newton iterations")
        sink_density = lam * th**5
        E_new = Es + dt * (Lap @ th - sink_density)
        sink = dt * float(np.sum(sink_density)) * self.grid.cell_volume
        E_new = np.where(E_new > 0, E_new, matter_energy(r, th, a, eos))
        return E_new.reshape(shape), th.reshape(shape), sink, it

    def _project_species(self, rho, rhoY, Yfb):
        live = rho > RHO_FLOOR
        safe = np.where(live, rho, 1.0)
        Y = rhoY / safe
        clipped = np.clip(Y, 0.0, 1.0)
        clip_mass = self.grid.integrate(np.where(live, rho * np.sum(np.abs(clipped - Y), axis=0), 0.0))
        total = np.sum(clipped, axis=0)
        Y = clipped / np.where(total > 0, total, 1.0)
        Yfb = np.where(live, Y, Yfb)
        rhoY = np.where(live, rho * Y, 0.0)
        return rhoY, Yfb, clip_mass


def relax_normal_slip(w_old, forcing, tau, dt):
    """Exact solution of ``dw/dt = F - w / tau`` over ``dt``."""
    decay = np.exp(-dt / tau)
    return w_old * decay + forcing * tau * (-np.expm1(-dt / tau))


def compute_dt(state: SimState, grid: Grid, params: PenaltyParams, eos: EosSpec, cfl: float,
               prims: dict, v_max: float = 0.0, rho_thin: float = 0.0) -> float:
    """CFL time step from the advective and the explicit diffusive limits.

    The advective speed is ``|u| + c`` with ``c^2 = 5/3 p / rho + delta beta
    rho^(beta-1)``; the diffusive limit uses the largest of
    ``(mu+eta)/rho``, ``kappa/(rho c_v)`` and ``zeta/rho`` over cells that
    are not pinned to the domain velocity.
    """
    active = state.rho >= max(rho_thin, RHO_FLOOR)
    dx, d = grid.dx, grid.dim
    if not np.any(active):
        return cfl * dx
    rho = state.rho[active]
    speed = max(float(np.max(np.sqrt(np.sum(prims["u"][:, active] ** 2, axis=0)) + prims["c"][active])),
                v_max)
    D = np.maximum.reduce([(prims["mu"][active] + prims["eta"][active]) / rho,
                           prims["kappa"][active] / (rho * eos.c_v),
                           prims["zeta"][active] / rho])
    dt_adv = dx / speed if speed > 0 else np.inf
    Dm = float(np.max(D))
    dt_diff = dx**2 / (2 * d * Dm) if Dm > 0 else np.inf
    return cfl * min(dt_adv, dt_diff)


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Read-only record of a run: snapshots, step logs and monitor series."""

    sim: Simulation
    states: list = field(default_factory=list)
    logs: list = field(default_factory=list)
    series: dict = field(default_factory=dict)

    @property
    def final(self) -> SimState:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def record(self, name, value):
        self.series.setdefault(name, []).append(value)

    def series_array(self, name) -> np.ndarray:
        return np.asarray(self.series.get(name, []), dtype=float)


def run(sim: Simulation, state0: SimState, T_final: float, callbacks=(), every: int = 1,
        keep_every: int | None = 0, max_steps: int = 10_000_000) -> Trajectory:
    """Advance from ``state0`` to ``T_final``.

    ``callbacks`` are called as ``cb(traj, state, log)`` every ``every``
    steps and at the final state (``log`` is ``None`` for the initial
    state).  Snapshots are kept every ``keep_every`` steps (0 keeps only
    the initial and final states, ``None`` none but the final one).
    """
    traj = Trajectory(sim)
    state = state0.copy()
    if keep_every is not None:
        traj.states.append(state.copy())
    for cb in callbacks:
        cb(traj, state, None)
    nstep = 0
    while state.t < T_final * (1 - 1e-14) and nstep < max_steps:
        dt = sim.compute_dt(state)
        if state.t + dt > T_final or T_final - (state.t + dt) < 1e-3 * dt:
            dt = T_final - state.t
        state, lg = sim.step(state, dt)
        if abs(state.t - T_final) < 1e-13 * max(1.0, T_final):
            state.t = T_final
        nstep += 1
        traj.logs.append(lg)
        last = state.t >= T_final
        if keep_every and nstep % keep_every == 0 and not last:
            traj.states.append(state.copy())
        if nstep % every == 0 or last:
            for cb in callbacks:
                cb(traj, state, lg)
    if not traj.states or traj.states[-1].t != state.t:
        traj.states.append(state.copy())
    log.debug("run finished after %d steps at t=%g", nstep, state.t)
    return traj
