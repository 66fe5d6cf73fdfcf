import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from penflow.penalty import (
    PenaltyConfigError,
    artificial_pressure,
    delta_energy_density,
    derive_params,
    mollified_coefficients,
    regularization_sources,
)
from penflow.thermo import EosSpec, TransportLaws, eval_pressure, ThermoPoint, eval_transport


def test_h_scaling_examples():
    p = derive_params(0.1, 1e-3)
    assert (p.lam, p.omega, p.nu, p.xi) == pytest.approx((0.1, 0.01, 1e-3, 1e-10), rel=1e-14)
    p = derive_params(1.0, 1e-3)
    assert (p.lam, p.omega, p.nu, p.xi) == (1.0, 1.0, 1.0, 1.0)
    assert derive_params(0.5, 1e-3).xi == pytest.approx(9.765625e-4, rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1.0))
def test_h_scaling_roots_agree(h):
    p = derive_params(h, 1.0)
    assert p.lam == h
    assert p.omega ** 0.5 == pytest.approx(h, rel=1e-14)
    assert p.nu ** (1 / 3) == pytest.approx(h, rel=1e-14)
    assert p.xi ** 0.1 == pytest.approx(h, rel=1e-14)


def test_parameter_validation():
    with pytest.raises(PenaltyConfigError, match="beta >= 4"):
        derive_params(0.2, 1e-3, beta=3.0)
    with pytest.raises(PenaltyConfigError):
        derive_params(0.0, 1e-3)
    with pytest.raises(PenaltyConfigError):
        derive_params(0.2, 0.0)
    with pytest.raises(PenaltyConfigError):
        derive_params(0.2, 1e-3, delta=-1.0)


def test_thermal_sink_switch():
    p = derive_params(0.3, 1e-3, thermal_sink=False)
    assert p.lam == 0.0 and p.omega == pytest.approx(0.09)
    assert regularization_sources(2.0, p) == (0.0, 0.0)


def test_mollified_coefficients_fluid_and_solid():
    eos = EosSpec(a=3.0, transport=TransportLaws(mu0=1.0))
    tr = eval_transport(1.3, eos)
    got = mollified_coefficients(1.3, 1.0, 1.0, 1.0, eos)
    assert got == (tr.mu, tr.eta, tr.zeta, tr.kappa, 3.0)
    p = derive_params(0.1, 1e-3)
    mu_w = mollified_coefficients(1.0, p.omega, p.nu, p.xi, eos)[0]
    assert mu_w == pytest.approx(0.02, rel=1e-14)
    p = derive_params(0.5, 1e-3)
    a_xi = mollified_coefficients(1.0, p.omega, p.nu, p.xi, eos)[4]
    assert a_xi == pytest.approx(3 * 2.0**-10, rel=1e-15)


def test_artificial_pressure_examples():
    eos = EosSpec(a=0.4, p_inf=1.0)
    p0 = derive_params(0.2, 1e-3)
    pt = ThermoPoint(1.2, 0.9)
    assert artificial_pressure(1.2, 0.9, eos.a, p0, eos) == pytest.approx(eval_pressure(pt, eos).p)
    p = derive_params(0.2, 1e-3, delta=0.1, beta=4.0)
    assert artificial_pressure(2.0, 0.0, eos.a, p, eos) == pytest.approx(2.0 ** (5 / 3) + 1.6, rel=1e-14)
    assert artificial_pressure(0.0, 1.5, 0.3, p, eos) == pytest.approx(0.1 * 1.5**4, rel=1e-14)


def test_delta_energy_density():
    p = derive_params(0.2, 1e-3, delta=0.3, beta=5.0)
    assert delta_energy_density(2.0, p) == pytest.approx(0.3 * 32 / 4)


def test_regularization_sources_examples():
    assert regularization_sources(1.0, derive_params(0.1, 1e-3)) == pytest.approx((0.1, 0.1))
    assert regularization_sources(2.0, derive_params(1.0, 1e-3)) == pytest.approx((32.0, 16.0))


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(1e-3, 1.0), st.floats(0.0, 20.0))
def test_coefficients_nondecreasing_in_h(h1, h2, theta):
    lo, hi = sorted((h1, h2))
    eos = EosSpec()
    a, b = derive_params(lo, 1.0), derive_params(hi, 1.0)
    ca = mollified_coefficients(theta, a.omega, a.nu, a.xi, eos)
    cb = mollified_coefficients(theta, b.omega, b.nu, b.xi, eos)
    assert all(x <= y for x, y in zip(ca, cb))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 20.0), st.floats(0.0, 20.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_artificial_pressure_dominates_molecular(rho, theta, a_xi, delta):
    eos = EosSpec()
    p = derive_params(0.5, 1e-3, delta=delta)
    assert artificial_pressure(rho, theta, a_xi, p, eos) >= eos.closure.pressure(rho, theta)
