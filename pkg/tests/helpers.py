"""Synthetic inputs shared by the analysis and similarity tests."""

import numpy as np

from blowrefine.engine import PhaseRecord
from blowrefine.nonlinearity import ModelParams, kappa


def synthetic_records(params: ModelParams, T: float = 0.05, K: int = 12, steps=None, I2=None):
    """Records obeying T - sigma_k = (kappa/M)^{p-1} h_k^2 exactly.

    ``steps`` overrides N_k; ``I2(k)`` sets (y_k^+/h_{k+1})^2 (rounded to a
    node).
    """
    c = (kappa(params) / params.M) ** (params.p - 1.0)
    recs = []
    prev_sigma = 0.0
    j_prev = None
    for k in range(K + 1):
        h = params.hbar / params.lambda_inv ** k
        tau = params.c_delta * h * h
        sigma = T - c * h * h
        tau_star = sigma - prev_sigma
        j = 10 if I2 is None else int(round(np.sqrt(I2(k)) / params.lambda_inv))
        i0 = -(j + 3) if j_prev is None else -j_prev * params.lambda_inv
        n = -2 * i0 + 1
        snap = np.full(n, 0.5 * params.M / h)
        snap[n // 2] = params.M / h
        recs.append(PhaseRecord(k=k, tau_star=tau_star, steps=tau_star / tau if steps is None else steps,
                                sigma_k=sigma, y_minus=-j * h, y_plus=j * h, refining_snapshot=snap,
                                sup_u=params.M / h, h=h, tau=tau, i0=i0, j_minus=-j, j_plus=j))
        prev_sigma = sigma
        j_prev = j
    return recs
