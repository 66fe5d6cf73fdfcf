"""Species production rates and an auditor for their structural constraints.

Two networks are available.  ``zero`` produces nothing for any species
count.  ``reversible`` is the single reaction ``A + B <=> C`` on three
species with mass-conserving stoichiometry ``sigma = (-r/2, -r/2, r)``.
The scalar progress ``r`` follows the chemical affinity
``A = (g_A + g_B)/2 - g_C``::

    r = K0 * (Y_A Y_B max(s, 0) - Y_C max(-s, 0)),   s = tanh(A / (theta a_w))

so ``r A >= 0`` everywhere, which makes ``sum g_k sigma_k = -r A <= 0``.
The width ``a_w`` sets how sharply the rate switches direction; it keeps
the law continuous.  Clipping acts on ``r`` so that the zero sum survives.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ChemistryConfigError(ValueError):
    """Raised for inconsistent network definitions."""


@dataclass(frozen=True)
class ReactionNetwork:
    kind: str = "reversible"
    n: int = 3
    K0: float = 1.0
    sigma_bar: float = 1.0
    affinity_width: float = 0.05
    custom: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("reversible", "zero", "custom"):
            raise ChemistryConfigError(f"unknown network kind {self.kind!r}")
        if self.kind == "reversible" and self.n != 3:
            raise ChemistryConfigError("the reversible A+B<=>C law needs n = 3 species")
        if self.kind == "custom" and self.custom is None:
            raise ChemistryConfigError("custom network needs a rate callable")
        if self.n < 1:
            raise ChemistryConfigError("need at least one species")
        if not self.K0 > 0 or not self.sigma_bar > 0 or not self.affinity_width > 0:
            raise ChemistryConfigError("K0, sigma_bar and affinity_width must be positive")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "K0": self.K0,
                "sigma_bar": self.sigma_bar, "affinity_width": self.affinity_width}


def reaction_progress(theta, Y, g, net: ReactionNetwork) -> np.ndarray:
    """Clipped scalar progress ``r`` of the reversible reaction."""
    theta = np.asarray(theta, dtype=float)
    Y = np.asarray(Y, dtype=float)
    g = np.asarray(g, dtype=float)
    affinity = 0.5 * (g[0] + g[1]) - g[2]
    s = np.tanh(affinity / (theta * net.affinity_width))
    r = net.K0 * (Y[0] * Y[1] * np.maximum(s, 0.0) - Y[2] * np.maximum(-s, 0.0))
    return np.clip(r, -net.sigma_bar, net.sigma_bar)


def eval_production(theta, Y, g, net: ReactionNetwork) -> np.ndarray:
    """Production rates ``sigma_k``; axis 0 of ``Y``, ``g`` and the result is species."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] != net.n:
        raise ChemistryConfigError(f"network has {net.n} species, Y has {Y.shape[0]}")
    if np.any(np.asarray(theta) <= 0):
        raise ValueError("production rates need theta > 0")
    if net.kind == "zero":
        return np.zeros_like(Y)
    if net.kind == "custom":
        return np.asarray(net.custom(theta, Y, g), dtype=float)
    r = reaction_progress(theta, Y, g, net)
    half = 0.5 * r
    return np.stack([-half, -half, r])


@dataclass
class ChemReport:
    checks: dict = field(default_factory=dict)
    lipschitz: float = float("nan")
    n_samples: int = 0

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    @property
    def failures(self) -> list:
        return [k for k, (ok, _) in self.checks.items() if not ok]

    def __str__(self):
        lines = [f"{name:<28} {'PASS' if ok else 'FAIL':<5} {detail}"
                 for name, (ok, detail) in self.checks.items()]
        lines.append(f"{'lipschitz estimate':<28} {'':<5} L={self.lipschitz:.3e} "
                     f"over {self.n_samples} samples")
        return "\n".join(lines)


def audit_network(net: ReactionNetwork, eos, n_samples: int = 10_000, seed: int = 0,
                  theta_range=(0.1, 10.0), tol: float = 1e-12) -> ChemReport:
    """Sample ``(theta, Y)`` over the simplex and check every rate constraint.

    Boundary samples (one species set to zero) are mixed in so that the
    sign condition is exercised.  The Lipschitz constant is estimated from
    nearby sample pairs.
    """
    rng = np.random.default_rng(seed)
    n = net.n
    theta = np.exp(rng.uniform(np.log(theta_range[0]), np.log(theta_range[1]), n_samples))
    Y = rng.dirichlet(np.ones(n), n_samples).T
    n_face = n_samples // 4
    for k in range(n):
        rows = slice(k * n_face // n, (k + 1) * n_face // n)
        Y[k, rows] = 0.0
    Y /= Y.sum(axis=0)
    g = eos.gibbs(theta)
    sig = eval_production(theta, Y, g, net)

    rep = ChemReport(n_samples=n_samples)
    bound = np.max(np.abs(sig)) if sig.size else 0.0
    rep.checks["bounds |sigma_k|<=sigma_bar"] = (bool(bound <= net.sigma_bar + tol),
                                                 f"max={bound:.3e}")
    zs = np.max(np.abs(sig.sum(axis=0)))
    rep.checks["zero sum"] = (bool(zs <= tol), f"max |sum|={zs:.3e}")

    bad = []
    for k in range(n):
        on_face = Y[k] == 0.0
        if np.any(on_face) and np.min(sig[k, on_face]) < -tol:
            bad.append(k)
    rep.checks["sign at Y_k=0"] = (not bad, f"violating species={bad}" if bad else "ok")

    ent = np.max(np.sum(g * sig, axis=0))
    rep.checks["sum g_k sigma_k<=0"] = (bool(ent <= tol), f"max={ent:.3e}")

    # Lipschitz estimate from perturbed copies of every sample
    dth = 1e-6 * theta
    dY = rng.normal(scale=1e-6, size=Y.shape)
    dY -= dY.mean(axis=0)
    Y2 = np.clip(Y + dY, 0.0, 1.0)
    Y2 /= Y2.sum(axis=0)
    sig2 = eval_production(theta + dth, Y2, eos.gibbs(theta + dth), net)
    num = np.abs(sig2 - sig).sum(axis=0)
    den = dth + np.abs(Y2 - Y).sum(axis=0)
    rep.lipschitz = float(np.max(num / den))
    return rep
