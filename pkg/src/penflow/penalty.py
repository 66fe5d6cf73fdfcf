"""Penalization parameters, the h-scaling and mollified coefficients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .thermo import EosSpec, eval_transport


class PenaltyConfigError(ValueError):
    """Raised for inadmissible penalty parameters."""


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty strength ``eps``, scaling ``h``, artificial pressure ``delta rho^beta``.

    The degeneration parameters follow ``lambda = omega^(1/2) = nu^(1/3) =
    xi^(1/10) = h``.  ``thermal_sink=False`` switches the ``lambda theta^5``
    sink off while keeping the mask scaling, which fixed-domain regressions
    use to isolate the transport operators.
    """

    h: float
    eps: float
    delta: float = 0.0
    beta: float = 4.0
    thermal_sink: bool = True

    def __post_init__(self):
        errors = []
        if not 0 < self.h <= 1:
            errors.append(f"h must lie in (0, 1], got {self.h}")
        if not self.eps > 0:
            errors.append(f"eps must be positive, got {self.eps}")
        if not self.delta >= 0:
            errors.append(f"delta must be non-negative, got {self.delta}")
        if not self.beta >= 4:
            errors.append(f"beta must satisfy beta >= 4, got {self.beta}")
        if errors:
            raise PenaltyConfigError("; ".join(errors))

    @property
    def lam(self) -> float:
        return self.h if self.thermal_sink else 0.0

    @property
    def omega(self) -> float:
        return self.h**2

    @property
    def nu(self) -> float:
        return self.h**3

    @property
    def xi(self) -> float:
        return self.h**10

    def to_dict(self) -> dict:
        return {"h": self.h, "eps": self.eps, "delta": self.delta, "beta": self.beta,
                "thermal_sink": self.thermal_sink, "lambda": self.lam,
                "omega": self.omega, "nu": self.nu, "xi": self.xi}


def derive_params(h: float, eps: float, delta: float = 0.0, beta: float = 4.0,
                  thermal_sink: bool = True) -> PenaltyParams:
    return PenaltyParams(h=h, eps=eps, delta=delta, beta=beta, thermal_sink=thermal_sink)


def mollified_coefficients(theta, f_omega, chi_nu, chi_xi, eos: EosSpec):
    """Return ``(mu_w, eta_w, zeta_w, kappa_nu, a_xi)``."""
    tr = eval_transport(theta, eos)
    f_omega = np.asarray(f_omega, dtype=float)
    return (f_omega * tr.mu, f_omega * tr.eta, f_omega * tr.zeta,
            np.asarray(chi_nu, dtype=float) * tr.kappa,
            np.asarray(chi_xi, dtype=float) * eos.a)


def artificial_pressure(rho, theta, a_xi, params: PenaltyParams, eos: EosSpec):
    """``p_M + a_xi theta^4 / 3 + delta rho^beta``."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return (eos.closure.pressure(rho, theta) + np.asarray(a_xi) / 3.0 * theta**4
            + params.delta * rho**params.beta)


def delta_energy_density(rho, params: PenaltyParams):
    """Volumetric energy ``delta rho^beta / (beta - 1)`` of the artificial pressure."""
    return params.delta * np.asarray(rho, dtype=float) ** params.beta / (params.beta - 1.0)


def regularization_sources(theta, params: PenaltyParams):
    """``(lambda theta^5, lambda theta^4)`` for the energy and entropy balances."""
    theta = np.asarray(theta, dtype=float)
    return params.lam * theta**5, params.lam * theta**4
