# %% [markdown]
# # Similarity variables
#
# With y = (x - b)/sqrt(T - t), s = -log(T - t) and w = (T - t)^{1/2} u, the
# blow-up becomes long-time behaviour of w. We estimate T from the phase
# times, follow the weighted energy J_a along the stored snapshots and
# project w - phi(s) on Hermite eigenfunctions.

# %%
import numpy as np

from blowrefine.config import RunConfig
from blowrefine.engine import run_simulation
from blowrefine.nonlinearity import kappa
from blowrefine.similarity import run_diagnostics

rep = run_simulation(RunConfig(hbar=0.02, a=1.0, phases=40))
diag = run_diagnostics(rep)
print(f"b = {diag.frame.b}, T = {diag.frame.T:.15f}, relative fit residual {diag.frame.residual:.2e}")

# %% [markdown]
# J_a should not increase. The dissipation column is the discrete
# -1/2 int |dw/ds|^2 rho over each interval.

# %%
L = diag.lyapunov
print(L.summary())
for i in range(0, len(L.s), 8):
    print(f"s = {L.s[i]:7.3f}   E0 = {L.E0[i]:.6f}   I = {L.I[i]:+.3e}   J_a = {L.J[i]:.6f}")

# %% [markdown]
# For the generic stable behaviour the second Hermite coefficient of
# w - phi decays like -kappa/(4 p s).

# %%
c = diag.classification
print("behaviour:", c.behavior, "-", c.detail)
print("target s c_2 =", -kappa(3.0) / 12)
print("computed s c_2 (last 6 snapshots):", np.round(c.scaled_c2[-6:], 5))
