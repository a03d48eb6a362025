# %% [markdown]
# # Rescaled snapshots and the growth of the refined interval
#
# Two more predictions: the refining snapshot, stretched to the fixed
# interval z in (-1, 1) and scaled by h_k^{2/(p-1)}, approaches
#
#     v(z) = M (1 + (alpha^{1-p} - 1) lambda^{-2} z^2)^{-1/(p-1)},
#
# and the squared half-width of the refined interval, counted in nodes of
# the next level, grows linearly in k with slope gamma.

# %%
import numpy as np

from blowrefine.analysis import extract_vk, predictions, profile_error, refining, slope_fit
from blowrefine.config import RunConfig
from blowrefine.engine import run_simulation

for hbar in (0.04, 0.02, 0.01):
    rep = run_simulation(RunConfig(hbar=hbar, a=10.0, phases=40))
    pred = predictions(rep.params)
    errs = []
    for k in (10, 20, 30, 40):
        z, v = extract_vk(rep.records, k, rep.params)
        errs.append(profile_error(v, pred))
    fit = slope_fit(refining(rep.records), pred)
    print(f"hbar = {hbar:<5}  e_k (k=10..40): " + " ".join(f"{e:.2e}" for e in errs)
          + f"   slope/gamma = {fit.ratio:.4f}")

# %% [markdown]
# Profile at k = 40 on the finest run, next to the prediction.

# %%
z, v = extract_vk(rep.records, 40, rep.params)
for zi in (-1.0, -0.5, 0.0, 0.5, 1.0):
    i = int(np.argmin(np.abs(z - zi)))
    print(f"z = {z[i]:+.2f}   v_40 = {v[i]:.6f}   predicted = {pred.v_pred(z[i]):.6f}")
