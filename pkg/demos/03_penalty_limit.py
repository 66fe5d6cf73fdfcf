"""
Sending the penalty parameter to zero
=====================================

Shrinking eps drives the normal slip at the interface to zero.  Four
piston runs at 256 cells are enough to read off the rate; the acceptance
suite repeats this at 512 cells.
"""

from penflow.diagnostics import convergence_study
from penflow.scenario import load_config

sc = load_config("piston1d", ["grid.n=256", "penalty.h=0.2"])
res = convergence_study(sc, "penalty.eps", [1e-2, 1e-3, 1e-4, 1e-5], monitors=("slip",))
print(res.to_csv())

# %%
# The fitted slope is close to two: the exact relaxation leaves a slip
# proportional to eps, and the monitor integrates its square.
print(res.slope_table())
print("strictly decreasing:", res.monotone("slip"))

# %%
# The same driver sweeps the scaling parameter h.  The residuals in the
# solid shrink at the rates set by omega = h^2, nu = h^3 and xi = h^10.
sc_h = load_config("piston1d", ["grid.n=256", "penalty.eps=1e-4"])
res_h = convergence_study(sc_h, "penalty.h", [0.4, 0.2, 0.1, 0.05],
                          monitors=("A1", "A2", "A3", "A5"))
print(res_h.slope_table())
