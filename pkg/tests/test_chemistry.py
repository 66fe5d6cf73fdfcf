import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from penflow.chemistry import (
    ChemistryConfigError,
    ReactionNetwork,
    audit_network,
    eval_production,
    reaction_progress,
)
from penflow.thermo import EosSpec

EOS = EosSpec()
L_SAMPLED = audit_network(ReactionNetwork(), EOS, n_samples=2000, seed=1).lipschitz


def simplex(a, b):
    # map two unit-interval draws onto the 3-simplex
    lo, hi = sorted((a, b))
    return np.array([lo, hi - lo, 1.0 - hi])


def test_absent_species_is_not_consumed():
    net = ReactionNetwork()
    Y = np.array([0.0, 0.5, 0.5])
    sig = eval_production(1.0, Y, EOS.gibbs(1.0), net)
    assert sig[0] >= 0.0


def test_zero_network_produces_nothing():
    net = ReactionNetwork(kind="zero", n=5)
    Y = np.full(5, 0.2)
    assert np.array_equal(eval_production(2.0, Y, np.zeros(5), net), np.zeros(5))


def test_forward_reaction_rate():
    # affinity at theta = 1 is 0.9, so the switch is saturated and r = K0 Y_A Y_B
    net = ReactionNetwork(K0=1.0, sigma_bar=1.0)
    sig = eval_production(1.0, np.array([0.5, 0.5, 0.0]), EOS.gibbs(1.0), net)
    assert sig[2] == pytest.approx(0.25, rel=1e-14)
    assert sig.sum() == 0.0
    clipped = eval_production(1.0, np.array([0.5, 0.5, 0.0]), EOS.gibbs(1.0),
                              ReactionNetwork(K0=1.0, sigma_bar=0.1))
    assert clipped[2] == pytest.approx(0.1, rel=1e-14)
    assert clipped.sum() == 0.0


def test_reversible_law_needs_three_species():
    with pytest.raises(ChemistryConfigError):
        ReactionNetwork(kind="reversible", n=4)
    with pytest.raises(ChemistryConfigError):
        eval_production(1.0, np.full(2, 0.5), np.zeros(2), ReactionNetwork())


def test_audit_default_network_passes():
    rep = audit_network(ReactionNetwork(), EOS, n_samples=10_000)
    assert rep.passed, str(rep)
    assert np.isfinite(rep.lipschitz)


def test_audit_zero_network_passes():
    assert audit_network(ReactionNetwork(kind="zero"), EOS, n_samples=1000).passed


def test_audit_flags_constant_counterexample():
    net = ReactionNetwork(kind="custom", custom=lambda th, Y, g: np.stack(
        [np.ones_like(Y[0]), -np.ones_like(Y[0]), np.zeros_like(Y[0])]))
    rep = audit_network(net, EOS, n_samples=1000)
    assert "sign at Y_k=0" in rep.failures
    assert "violating species=[1]" in rep.checks["sign at Y_k=0"][1]


@settings(max_examples=300, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(0, 1), st.floats(0, 1),
       st.floats(0.1, 100.0), st.floats(0.01, 10.0))
def test_rates_are_bounded_zero_sum_and_dissipative(theta, a, b, K0, sbar):
    net = ReactionNetwork(K0=K0, sigma_bar=sbar)
    Y = simplex(a, b)
    g = EOS.gibbs(theta)
    sig = eval_production(theta, Y, g, net)
    assert np.all(np.abs(sig) <= sbar)
    assert sig.sum() == 0.0
    assert float(np.dot(g, sig)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0, 1), st.floats(0, 1),
       st.floats(-1e-3, 1e-3), st.floats(-1e-3, 1e-3))
def test_rates_are_lipschitz(theta, a, b, dth, dy):
    net = ReactionNetwork()
    L = L_SAMPLED
    Y = simplex(a, b)
    Y2 = np.clip(Y + np.array([dy, -dy, 0.0]), 0.0, 1.0)
    Y2 /= Y2.sum()
    th2 = theta + dth * theta
    s1 = eval_production(theta, Y, EOS.gibbs(theta), net)
    s2 = eval_production(th2, Y2, EOS.gibbs(th2), net)
    # the sampled constant with a safety factor for unsampled directions
    assert np.abs(s2 - s1).sum() <= 2.0 * L * (abs(th2 - theta) + np.abs(Y2 - Y).sum()) + 1e-15


def test_progress_sign_follows_affinity():
    net = ReactionNetwork()
    g = np.array([0.0, 0.0, 1.0])  # negative affinity drives C back
    r = reaction_progress(1.0, np.array([0.3, 0.3, 0.4]), g, net)
    assert r < 0
