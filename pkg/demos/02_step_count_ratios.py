# %% [markdown]
# # Step counts per phase
#
# The number of time steps in phase k, N_k = tau_k*/tau_k, tends to
# (lambda^{-2} - 1) M^{1-p} / (C_Delta (p - 1)) when the perturbation decays
# fast enough. Slowly decaying perturbations (small a) converge much more
# slowly, and at k = 40 the ratio is still far from one.

# %%
from blowrefine.analysis import predictions, ratio_series, refining
from blowrefine.config import RunConfig
from blowrefine.engine import run_simulation

hbar = 0.02
series = {}
for a in (0.1, 1.0, 10.0):
    rep = run_simulation(RunConfig(hbar=hbar, a=a, phases=40))
    pred = predictions(rep.params)
    ks, ratio = ratio_series(refining(rep.records), pred)
    series[a] = dict(zip(ks.tolist(), ratio.tolist()))
print(f"N_limit = {pred.N_limit:.4f} steps per phase at hbar = {hbar}")

# %%
print("   k" + "".join(f"{'a = %g' % a:>12}" for a in series))
for k in (10, 15, 20, 25, 30, 35, 40):
    print(f"{k:4d}" + "".join(f"{series[a][k]:12.4f}" for a in series))
