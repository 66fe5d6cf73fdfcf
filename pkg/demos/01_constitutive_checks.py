"""
Auditing the equation of state and the reaction law
====================================================

Before any flow is simulated, the constitutive closure and the production
rates are checked on their own.  Everything here runs in well under a second.
"""

import numpy as np

from penflow.chemistry import ReactionNetwork, audit_network, eval_production
from penflow.thermo import (EosSpec, ThermoPoint, eval_energy, eval_pressure,
                            flat_start_closure, gibbs_residual, verify_hypotheses)

eos = EosSpec()
pt = ThermoPoint(1.0, 1.0, (0.3, 0.3, 0.4))
print("pressure parts at rho = theta = 1:", eval_pressure(pt, eos))
print("energy parts at rho = theta = 1:  ", eval_energy(pt, eos))

# %%
# The Gibbs relation is checked by central differences.  The residual is
# pure truncation error, so halving the step divides it by four.
for step in (1e-2, 5e-3, 2.5e-3):
    print(f"fd_step {step:.1e}: Gibbs residual {gibbs_residual(pt, eos, fd_step=step).residual:.3e}")

# %%
# The hypothesis audit passes for the default closure.  The third law is
# reported as a known deviation: S(Z) = -log Z does not tend to zero.
print(verify_hypotheses(eos))

# %%
# A closure whose profile starts flat violates exactly one hypothesis.
print(verify_hypotheses(EosSpec(closure=flat_start_closure(1.0))).failures)

# %%
# The reversible reaction A + B <=> C conserves mass and never produces
# entropy with the wrong sign.  The auditor samples the simplex to check.
net = ReactionNetwork()
print(audit_network(net, eos, n_samples=5000))
g = eos.gibbs(1.0).ravel()
sigma = eval_production(1.0, np.array([0.5, 0.5, 0.0]), g, net)
print("rates at Y = (0.5, 0.5, 0):", sigma, " sum g.sigma =", float(g @ sigma))
