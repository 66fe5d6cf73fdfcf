"""Equation of state, transport laws and thermodynamic consistency checks.

The molecular pressure is written through a single profile function ``P``
of the degeneracy variable ``Z = rho / theta**1.5``::

    p_M = theta**2.5 * P(Z),   e_M = 1.5 * p_M / rho,   s_M = S(Z)

Radiation contributes ``p_R = a theta^4 / 3``, ``e_R = a theta^4 / rho`` and
``s_R = 4 a theta^3 / (3 rho)``; species carry constant formation enthalpies
``h_k`` and entropies ``s_k`` with Gibbs potentials ``g_k = h_k - theta s_k``.

The default closure ``P(Z) = Z + p_inf Z**(5/3)`` gives the closed forms
``p_M = rho theta + p_inf rho**(5/3)``, ``e_M = 1.5 (theta + p_inf rho**(2/3))``
and ``s_M = -log Z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate


class ThermoDomainError(ValueError):
    """Raised when a thermodynamic function is evaluated outside its domain."""


# ---------------------------------------------------------------------------
# closures
# ---------------------------------------------------------------------------


class PressureClosure:
    """Molecular closure defined by a pressure profile ``P`` and its derivative.

    ``S`` may be given explicitly; otherwise it is integrated from
    ``S'(Z) = -1.5 (5/3 P(Z) - Z P'(Z)) / Z**2`` with ``S(1) = 0``.
    """

    def __init__(self, P: Callable, dP: Callable, S: Callable | None = None,
                 name: str = "custom"):
        self._P = P
        self._dP = dP
        self._S = S
        self.name = name

    def P(self, Z):
        return self._P(np.asarray(Z, dtype=float))

    def dP(self, Z):
        return self._dP(np.asarray(Z, dtype=float))

    def dS(self, Z):
        Z = np.asarray(Z, dtype=float)
        return -1.5 * (5.0 / 3.0 * self.P(Z) - Z * self.dP(Z)) / Z**2

    def S(self, Z):
        if self._S is not None:
            return self._S(np.asarray(Z, dtype=float))

        def one(z):
            if z <= 0:
                raise ThermoDomainError("S(Z) needs Z > 0")
            val, _ = integrate.quad(lambda u: float(self.dS(math.exp(u))) * math.exp(u),
                                    0.0, math.log(z), limit=200)
            return val

        return np.vectorize(one, otypes=[float])(np.asarray(Z, dtype=float))

    # state functions -----------------------------------------------------

    def pressure(self, rho, theta):
        rho, theta = np.asarray(rho, float), np.asarray(theta, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            Z = rho / theta**1.5
            out = theta**2.5 * self.P(Z)
        return np.where(rho == 0.0, 0.0, out)

    def volumetric_energy(self, rho, theta):
        """``rho * e_M``; well defined at vacuum."""
        return 1.5 * self.pressure(rho, theta)

    def energy(self, rho, theta):
        rho, theta = np.asarray(rho, float), np.asarray(theta, float)
        return 1.5 * self.pressure(rho, theta) / rho

    def energy_dtheta(self, rho, theta):
        """``d e_M / d theta`` at fixed density."""
        rho, theta = np.asarray(rho, float), np.asarray(theta, float)
        Z = rho / theta**1.5
        return 2.25 * (5.0 / 3.0 * self.P(Z) - Z * self.dP(Z)) / Z

    def volumetric_energy_dtheta(self, rho, theta):
        rho, theta = np.asarray(rho, float), np.asarray(theta, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = rho * self.energy_dtheta(rho, theta)
        return np.where(rho == 0.0, 0.0, out)

    def pressure_drho(self, rho, theta):
        rho, theta = np.asarray(rho, float), np.asarray(theta, float)
        return theta * self.dP(rho / theta**1.5)

    def entropy(self, rho, theta):
        rho, theta = np.asarray(rho, float), np.asarray(theta, float)
        return self.S(rho / theta**1.5)


class MonatomicClosure(PressureClosure):
    """``P(Z) = Z + p_inf Z**(5/3)`` with closed-form state functions."""

    def __init__(self, p_inf: float):
        self.p_inf = float(p_inf)
        p = self.p_inf
        super().__init__(P=lambda Z: Z + p * Z ** (5.0 / 3.0),
                         dP=lambda Z: 1.0 + 5.0 / 3.0 * p * Z ** (2.0 / 3.0),
                         S=lambda Z: -np.log(Z),
                         name="monatomic")

    def dS(self, Z):
        return -1.0 / np.asarray(Z, dtype=float)

    def pressure(self, rho, theta):
        rho, theta = np.asarray(rho, float), np.asarray(theta, float)
        return rho * theta + self.p_inf * rho ** (5.0 / 3.0)

    def volumetric_energy(self, rho, theta):
        rho, theta = np.asarray(rho, float), np.asarray(theta, float)
        return 1.5 * (rho * theta + self.p_inf * rho ** (5.0 / 3.0))

    def energy(self, rho, theta):
        rho, theta = np.asarray(rho, float), np.asarray(theta, float)
        return 1.5 * (theta + self.p_inf * rho ** (2.0 / 3.0))

    def energy_dtheta(self, rho, theta):
        return np.full(np.broadcast(np.asarray(rho), np.asarray(theta)).shape, 1.5)

    def volumetric_energy_dtheta(self, rho, theta):
        return 1.5 * np.asarray(rho, float) + 0.0 * np.asarray(theta, float)

    def pressure_drho(self, rho, theta):
        rho, theta = np.asarray(rho, float), np.asarray(theta, float)
        return theta + 5.0 / 3.0 * self.p_inf * rho ** (2.0 / 3.0)

    def entropy(self, rho, theta):
        rho, theta = np.asarray(rho, float), np.asarray(theta, float)
        return 1.5 * np.log(theta) - np.log(rho)


def flat_start_closure(p_inf: float) -> PressureClosure:
    """A closure with ``P'(0) = 0`` that meets every other pressure hypothesis.

    ``P(Z) = p_inf Z**(5/3) + Z w / (1 + w)`` with ``w = Z**(1/3)``.  Used to
    exercise the hypothesis audit.
    """
    def P(Z):
        w = np.cbrt(Z)
        return p_inf * Z ** (5.0 / 3.0) + Z * w / (1.0 + w)

    def dP(Z):
        w = np.cbrt(Z)
        q = w / (1.0 + w)
        return 5.0 / 3.0 * p_inf * Z ** (2.0 / 3.0) + q + w / (3.0 * (1.0 + w) ** 2)

    return PressureClosure(P, dP, name="flat-start")


# ---------------------------------------------------------------------------
# specs and points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransportLaws:
    """Linear-in-temperature transport laws and their admissible bounds.

    The laws are ``mu = mu0 (1+theta)``, ``eta = eta0 (1+theta)``,
    ``kappa_M = kappa0 (1+theta)``, ``kappa_R = kappa1 (1+theta^3)`` and
    ``zeta = zeta0 + zeta1 theta``.  Bound constants default to values the
    laws meet by construction.
    """

    mu0: float = 0.01
    eta0: float = 0.005
    kappa0: float = 0.01
    kappa1: float = 0.001
    zeta0: float = 0.01
    zeta1: float = 0.005
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("mu0", "kappa0", "kappa1", "zeta0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"transport constant {name} must be positive")
        if self.eta0 < 0 or self.zeta1 < 0:
            raise ValueError("eta0 and zeta1 must be non-negative")
        defaults = {
            "mu_lo": self.mu0, "mu_hi": self.mu0,
            "eta_lo": self.eta0, "eta_hi": self.eta0,
            "kappaM_lo": self.kappa0, "kappaM_hi": self.kappa0,
            "kappaR_lo": self.kappa1, "kappaR_hi": self.kappa1,
            "zeta_lo": self.zeta0, "zeta_hi": max(self.zeta0, self.zeta1),
        }
        defaults.update(self.bounds)
        object.__setattr__(self, "bounds", defaults)


@dataclass(frozen=True)
class EosSpec:
    """Full constitutive closure.

    ``c_bound`` is the constant bounding ``d e_M / d theta`` and
    ``|rho d e_M / d rho| / e_M``.
    """

    a: float = 0.1
    p_inf: float = 1.0
    c_v: float = 1.5
    species_enthalpies: tuple = (1.0, 1.0, 0.0)
    species_entropies: tuple = (0.2, 0.2, 0.1)
    transport: TransportLaws = field(default_factory=TransportLaws)
    Z_under: float = 1.0
    Z_over: float = 1.0
    c_bound: float = 2.0
    closure: PressureClosure | None = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("radiation constant a must be positive")
        if not self.p_inf > 0:
            raise ValueError("p_inf must be positive")
        if not 0 < self.Z_under <= self.Z_over:
            raise ValueError("need 0 < Z_under <= Z_over")
        if len(self.species_enthalpies) != len(self.species_entropies):
            raise ValueError("species enthalpies and entropies differ in length")
        object.__setattr__(self, "species_enthalpies", tuple(float(h) for h in self.species_enthalpies))
        object.__setattr__(self, "species_entropies", tuple(float(s) for s in self.species_entropies))
        if self.closure is None:
            object.__setattr__(self, "closure", MonatomicClosure(self.p_inf))

    @property
    def n_species(self) -> int:
        return len(self.species_enthalpies)

    @property
    def h(self) -> np.ndarray:
        return np.array(self.species_enthalpies)

    @property
    def s(self) -> np.ndarray:
        return np.array(self.species_entropies)

    def gibbs(self, theta) -> np.ndarray:
        """Species Gibbs potentials ``g_k = h_k - theta s_k``; axis 0 is species."""
        theta = np.asarray(theta, dtype=float)
        shape = (-1,) + (1,) * theta.ndim
        return self.h.reshape(shape) - theta * self.s.reshape(shape)

    def to_dict(self) -> dict:
        t = self.transport
        return {
            "a": self.a, "p_inf": self.p_inf, "c_v": self.c_v,
            "species_enthalpies": list(self.species_enthalpies),
            "species_entropies": list(self.species_entropies),
            "Z_under": self.Z_under, "Z_over": self.Z_over, "c_bound": self.c_bound,
            "closure": self.closure.name,
            "transport": {k: getattr(t, k) for k in
                          ("mu0", "eta0", "kappa0", "kappa1", "zeta0", "zeta1")},
        }


@dataclass(frozen=True)
class ThermoPoint:
    rho: float | np.ndarray
    theta: float | np.ndarray
    Y: Sequence[float] | np.ndarray = (1.0,)

    def arrays(self):
        rho = np.asarray(self.rho, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(theta)) and np.all(np.isfinite(Y))):
            raise ThermoDomainError("non-finite thermodynamic state")
        return rho, theta, Y


def _species_sum(coef: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if Y.shape[0] != coef.shape[0]:
        raise ThermoDomainError(f"expected {coef.shape[0]} mass fractions, got {Y.shape[0]}")
    return np.tensordot(coef, Y, axes=(0, 0))


# ---------------------------------------------------------------------------
# state functions
# ---------------------------------------------------------------------------


class PressureParts(NamedTuple):
    p_M: np.ndarray
    p_R: np.ndarray
    p: np.ndarray


class EnergyParts(NamedTuple):
    e_M: np.ndarray
    e_R: np.ndarray
    e: np.ndarray


class EntropyParts(NamedTuple):
    s_M: np.ndarray
    s_R: np.ndarray
    s: np.ndarray


def eval_pressure(pt: ThermoPoint, eos: EosSpec) -> PressureParts:
    rho, theta, _ = pt.arrays()
    if np.any(rho < 0) or np.any(theta < 0):
        raise ThermoDomainError("pressure needs rho >= 0 and theta >= 0")
    p_M = eos.closure.pressure(rho, theta)
    p_R = eos.a / 3.0 * theta**4
    return PressureParts(p_M, p_R, p_M + p_R)


def eval_energy(pt: ThermoPoint, eos: EosSpec) -> EnergyParts:
    rho, theta, Y = pt.arrays()
    if np.any(rho <= 0):
        raise ThermoDomainError("specific energy is undefined at rho = 0; "
                                "use eval_volumetric_energy instead")
    e_M = eos.closure.energy(rho, theta)
    e_R = eos.a * theta**4 / rho
    return EnergyParts(e_M, e_R, e_M + e_R + _species_sum(eos.h, Y))


def eval_volumetric_energy(pt: ThermoPoint, eos: EosSpec) -> np.ndarray:
    """``rho e = rho e_M + a theta^4 + rho sum h_k Y_k``, valid at vacuum."""
    rho, theta, Y = pt.arrays()
    return (eos.closure.volumetric_energy(rho, theta) + eos.a * theta**4
            + rho * _species_sum(eos.h, Y))


def eval_entropy(pt: ThermoPoint, eos: EosSpec) -> EntropyParts:
    rho, theta, Y = pt.arrays()
    if np.any(rho <= 0) or np.any(theta <= 0):
        raise ThermoDomainError("entropy needs rho > 0 and theta > 0")
    s_M = eos.closure.entropy(rho, theta)
    s_R = 4.0 * eos.a / 3.0 * theta**3 / rho
    return EntropyParts(s_M, s_R, s_M + s_R + _species_sum(eos.s, Y))


class GibbsCheck(NamedTuple):
    residual: float
    components: dict
    suspect: bool


def gibbs_residual(pt: ThermoPoint, eos: EosSpec, fd_step: float = 1e-4, *,
                   pressure: Callable | None = None,
                   energy: Callable | None = None,
                   entropy: Callable | None = None) -> GibbsCheck:
    """Finite-difference check of ``theta Ds = De + p D(1/rho) - sum g_k DY_k``.

    Each of ``pressure(rho, theta, Y)``, ``energy(...)`` and ``entropy(...)``
    returns the total specific quantity and may be overridden to audit a
    foreign closure.  ``suspect`` is set when halving the step does not
    reduce the residual, which signals round-off domination.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    pressure = pressure or (lambda r, t, Y: eval_pressure(ThermoPoint(r, t, Y), eos).p)
    energy = energy or (lambda r, t, Y: eval_energy(ThermoPoint(r, t, Y), eos).e)
    entropy = entropy or (lambda r, t, Y: eval_entropy(ThermoPoint(r, t, Y), eos).s)
    rho, theta, Y = pt.arrays()
    rho, theta = float(rho), float(theta)
    g = eos.gibbs(theta).ravel()

    def components(step):
        out = {}
        ds = (entropy(rho, theta + step, Y) - entropy(rho, theta - step, Y)) / (2 * step)
        de = (energy(rho, theta + step, Y) - energy(rho, theta - step, Y)) / (2 * step)
        out["theta"] = abs(theta * ds - de)
        ds = (entropy(rho + step, theta, Y) - entropy(rho - step, theta, Y)) / (2 * step)
        de = (energy(rho + step, theta, Y) - energy(rho - step, theta, Y)) / (2 * step)
        out["rho"] = abs(theta * ds - (de - pressure(rho, theta, Y) / rho**2))
        for k in range(Y.shape[0]):
            dY = np.zeros_like(Y)
            dY[k] = step
            ds = (entropy(rho, theta, Y + dY) - entropy(rho, theta, Y - dY)) / (2 * step)
            de = (energy(rho, theta, Y + dY) - energy(rho, theta, Y - dY)) / (2 * step)
            out[f"Y{k}"] = abs(theta * ds - (de - g[k]))
        return {k: float(v) for k, v in out.items()}

    comp = components(fd_step)
    half = components(fd_step / 2)
    res, res_half = max(comp.values()), max(half.values())
    suspect = res > 1e-13 and res_half >= res
    return GibbsCheck(res, comp, suspect)


class Transport(NamedTuple):
    mu: np.ndarray
    eta: np.ndarray
    kappa_M: np.ndarray
    kappa_R: np.ndarray
    zeta: np.ndarray

    @property
    def kappa(self):
        return self.kappa_M + self.kappa_R


def eval_transport(theta, eos: EosSpec) -> Transport:
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or not np.all(np.isfinite(theta)):
        raise ThermoDomainError("transport laws need a finite theta >= 0")
    t = eos.transport
    return Transport(t.mu0 * (1 + theta), t.eta0 * (1 + theta), t.kappa0 * (1 + theta),
                     t.kappa1 * (1 + theta**3), t.zeta0 + t.zeta1 * theta)


# ---------------------------------------------------------------------------
# Helmholtz function
# ---------------------------------------------------------------------------


def helmholtz(pt: ThermoPoint, a_local, eos: EosSpec) -> np.ndarray:
    """``rho (e_M + e_R) - rho (s_M + s_R)`` with a spatially varying ``a``."""
    rho, theta, _ = pt.arrays()
    if np.any(rho <= 0) or np.any(theta <= 0):
        raise ThermoDomainError("Helmholtz function needs rho > 0 and theta > 0")
    a_local = np.asarray(a_local, dtype=float)
    cl = eos.closure
    return (cl.volumetric_energy(rho, theta) + a_local * theta**4
            - rho * cl.entropy(rho, theta) - 4.0 * a_local / 3.0 * theta**3)


def relative_helmholtz(rho, theta, rho_bar: float, a_local, eos: EosSpec) -> np.ndarray:
    """``H(rho, theta) - (rho - rho_bar) dH/drho(rho_bar, 1) - H(rho_bar, 1)``."""
    cl = eos.closure
    Zb = rho_bar
    dH = 1.5 * cl.dP(Zb) - (cl.S(Zb) + Zb * cl.dS(Zb))
    H = helmholtz(ThermoPoint(rho, theta), a_local, eos)
    Hb = helmholtz(ThermoPoint(rho_bar, 1.0), a_local, eos)
    return H - (np.asarray(rho) - rho_bar) * dH - Hb


# ---------------------------------------------------------------------------
# hypothesis audit
# ---------------------------------------------------------------------------


@dataclass
class HypothesisEntry:
    name: str
    status: str  # "pass", "fail" or "deviation"
    detail: str = ""


@dataclass
class HypothesisReport:
    entries: list = field(default_factory=list)

    def add(self, name, ok, detail="", deviation=False):
        status = "pass" if ok else ("deviation" if deviation else "fail")
        self.entries.append(HypothesisEntry(name, status, detail))

    def __getitem__(self, name) -> HypothesisEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def failures(self) -> list:
        return [e.name for e in self.entries if e.status == "fail"]

    @property
    def deviations(self) -> list:
        return [e.name for e in self.entries if e.status == "deviation"]

    @property
    def passed(self) -> bool:
        return not self.failures

    def __str__(self):
        width = max(len(e.name) for e in self.entries)
        return "\n".join(f"{e.name:<{width}}  {e.status.upper():<9}  {e.detail}"
                         for e in self.entries)


def _central(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


def verify_hypotheses(eos: EosSpec, sample_grid=((0.1, 10.0), (0.1, 10.0)),
                      n: int = 25) -> HypothesisReport:
    """Audit the closure against the structural pressure/energy/entropy hypotheses.

    Failures are report entries, never exceptions.  The third-law limit
    ``S(Z) -> 0`` is reported as a deviation rather than a failure.
    ``sample_grid`` holds the density and temperature ranges, sampled
    geometrically with ``n`` points each.
    """
    cl = eos.closure
    rho_range, theta_range = sample_grid
    rep = HypothesisReport()
    rho = np.geomspace(*rho_range, n)
    theta = np.geomspace(*theta_range, n)
    R, T = np.meshgrid(rho, theta, indexing="ij")
    Z = R / T**1.5

    p0 = float(cl.P(0.0))
    rep.add("P(0)=0", abs(p0) <= 1e-14, f"P(0)={p0:.3e}")
    dp0 = float(cl.dP(0.0))
    rep.add("P'(0)>0", dp0 > 0, f"P'(0)={dp0:.3e}")

    hr = 1e-6 * R
    dp_drho = (cl.pressure(R + hr, T) - cl.pressure(R - hr, T)) / (2 * hr)
    rep.add("dp_M/drho>0", bool(np.all(dp_drho > 0)), f"min={dp_drho.min():.3e}")

    ht = 1e-6 * T
    de_dt = (cl.energy(R, T + ht) - cl.energy(R, T - ht)) / (2 * ht)
    ok = bool(np.all(de_dt > 0) and np.all(de_dt <= eos.c_bound * (1 + 1e-8)))
    rep.add("0<de_M/dtheta<=c", ok,
            f"range=[{de_dt.min():.3e}, {de_dt.max():.3e}], c={eos.c_bound}")

    e_M = cl.energy(R, T)
    rde = R * (cl.energy(R + hr, T) - cl.energy(R - hr, T)) / (2 * hr)
    ratio = np.abs(rde) / e_M
    rep.add("|rho de_M/drho|<=c e_M", bool(np.all(ratio <= eos.c_bound * (1 + 1e-8))),
            f"max ratio={ratio.max():.3e}")

    e_cold = cl.energy(rho, np.full_like(rho, 1e-10))
    rep.add("e_M(theta->0)>0", bool(np.all(e_cold > 0)), f"min={e_cold.min():.3e}")

    Zbig = np.array([1e6, 1e9, 1e12])
    dev = np.abs(cl.P(Zbig) / Zbig ** (5.0 / 3.0) - eos.p_inf) / eos.p_inf
    ok = bool(np.all(np.diff(dev) <= 0) and dev[-1] < 1e-3)
    rep.add("P(Z)/Z^(5/3)->p_inf", ok, f"relative gaps={np.array2string(dev, precision=2)}")

    Zd = np.geomspace(eos.Z_over, max(10 * eos.Z_over, Z.max()), 40)
    dS = _central(cl.S, Zd, 1e-5 * Zd)
    rep.add("S'(Z)<0 (degenerate area)", bool(np.all(dS < 0)), f"max S'={dS.max():.3e}")

    mask = Z > eos.Z_over
    if np.any(mask):
        gap = np.abs(cl.pressure(R, T) - 2.0 / 3.0 * R * e_M)[mask]
        scale = cl.pressure(R, T)[mask]
        ok = bool(np.all(gap <= 1e-10 * scale))
        rep.add("caloric p_M=(2/3) rho e_M", ok, f"max rel gap={np.max(gap / scale):.3e}")
    else:
        rep.add("caloric p_M=(2/3) rho e_M", True, "no degenerate samples")

    # rho e_R equals a theta^4 exactly, so the bound reduces to the molecular part
    lower = R * e_M - 1.5 * eos.p_inf * R ** (5.0 / 3.0)
    rep.add("rho(e_M+e_R)>=a theta^4+1.5 p_inf rho^(5/3)", bool(np.all(lower >= -1e-12)),
            f"min margin={lower.min():.3e}")

    tr = eval_transport(theta, eos)
    b = eos.transport.bounds
    tol = 1e-12
    ok = (np.all(tr.mu >= b["mu_lo"] * (1 + theta) - tol) and np.all(tr.mu <= b["mu_hi"] * (1 + theta) + tol)
          and np.all(tr.eta >= b["eta_lo"] * (1 + theta) - tol) and np.all(tr.eta <= b["eta_hi"] * (1 + theta) + tol)
          and np.all(tr.kappa_M >= b["kappaM_lo"] * (1 + theta) - tol)
          and np.all(tr.kappa_M <= b["kappaM_hi"] * (1 + theta) + tol)
          and np.all(tr.kappa_R >= b["kappaR_lo"] * (1 + theta**3) - tol)
          and np.all(tr.kappa_R <= b["kappaR_hi"] * (1 + theta**3) + tol)
          and np.all(tr.zeta >= b["zeta_lo"] - tol) and np.all(tr.zeta <= b["zeta_hi"] * (1 + theta) + tol))
    rep.add("transport bounds", bool(ok), "mu, eta, kappa_M, kappa_R, zeta")

    S_big = cl.S(Zbig)
    ok = bool(np.all(np.diff(np.abs(S_big)) < 0) and abs(S_big[-1]) < 1e-3)
    rep.add("third law S(Z)->0", ok, f"S at Z=1e6,1e9,1e12: {np.array2string(S_big, precision=3)}",
            deviation=True)
    return rep
