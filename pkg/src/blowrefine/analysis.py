"""Comparison of refining-phase records with the asymptotic predictions.

The three tracked quantities are the step counts N_k = tau_k*/tau_k, the
rescaled refining snapshots v_k(z) and the growth of the refined interval
I_k^2 against k. Reports are CSV/JSON files with 17 significant digits so that
parsing them reproduces the in-memory numbers exactly.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError, InsufficientDataError
from .nonlinearity import ModelParams, kappa

FLOAT_FMT = "%.17g"

PHASES_COLUMNS = ("k", "h_k", "tau_k", "tau_star", "N_k", "N_ratio", "sigma_k",
                  "y_plus", "sup_u", "scaled_sup")
PROFILE_COLUMNS = ("z", "v_k", "v_pred", "abs_err")


@dataclass(frozen=True)
class PredictionSet:
    """Limits of N_k, v_k and I_k^2 for a parameter set.

    ``B`` uses the sup of the initial data over grid nodes (the convention of
    the threshold M); ``B_continuous`` the sup of the continuous expression.
    """

    params: ModelParams
    N_limit: float
    gamma: float
    B: float
    B_continuous: float
    c_p: float

    def v_pred(self, z):
        P = self.params
        e = -1.0 / (P.p - 1.0)
        z = np.asarray(z, dtype=float)
        return P.M * (1.0 + (P.alpha ** (1.0 - P.p) - 1.0) * P.lambda_inv ** 2 * z * z) ** e


def _slope_terms(M, P: ModelParams):
    p, lam = P.p, P.lam
    c_p = (p - 1.0) / (4.0 * p)
    A = M ** (1.0 - p) * (P.alpha ** (1.0 - p) - 1.0) / (c_p * (p - 1.0) * lam ** 2)
    gamma = 2.0 * A * abs(math.log(lam))
    B = -A * math.log(M ** (1.0 - p) * P.hbar ** 2 / (p - 1.0))
    return c_p, gamma, B


def predictions(params: ModelParams, continuous_sup: Optional[float] = None) -> PredictionSet:
    P = params
    N_limit = (P.lam ** -2 - 1.0) * P.M ** (1.0 - P.p) / (P.c_delta * (P.p - 1.0))
    c_p, gamma, B = _slope_terms(P.M, P)
    if continuous_sup is None:
        B_cont = B
    else:
        M_cont = P.lambda_inv ** P.exponent * P.hbar ** P.exponent * continuous_sup
        B_cont = _slope_terms(M_cont, P)[2]
    return PredictionSet(P, N_limit, gamma, B, B_cont, c_p)


def n_pre(hbar: float, c_delta: float, lam: float, p: float, initial_sup: float) -> float:
    """(1 - lambda^2) |phi|^{1-p} / (C_Delta (p-1) hbar^2), equal to N_limit."""
    return (1.0 - lam * lam) * initial_sup ** (1.0 - p) / (c_delta * (p - 1.0) * hbar * hbar)


def refining(records: Sequence) -> list:
    """The refining phases k >= 1 (phase 0 only starts the hierarchy)."""
    return [r for r in records if r.k >= 1]


def ratio_series(records: Sequence, pred: PredictionSet) -> tuple[np.ndarray, np.ndarray]:
    """(k, N_k / N_limit)."""
    ks = np.array([r.k for r in records], dtype=int)
    return ks, np.array([r.steps for r in records], dtype=float) / pred.N_limit


def z_grid(n: int = 401) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n)


def extract_vk(records: Sequence, k: int, params: ModelParams, z=None) -> tuple[np.ndarray, np.ndarray]:
    """v_k(z) = h_k^{2/(p-1)} u_k(x(z), tau_k*) on the level-k domain.

    The level-k grid spans [y^-_{k-1}, y^+_{k-1}]; z = -1, 1 are its end
    nodes. For symmetric data this is x = z y^+_{k-1}. Positions are computed
    from integer node indices so that z = 0 lands exactly on the centre node.
    """
    byk = {r.k: r for r in records}
    if k not in byk or k - 1 not in byk:
        raise IndexError(f"phase {k} needs records for phases {k - 1} and {k}")
    rec, prev = byk[k], byk[k - 1]
    z = z_grid() if z is None else np.asarray(z, dtype=float)
    if np.any(np.abs(z) > 1.0):
        raise DataError("z must lie in [-1, 1]")
    half = 0.5 * (prev.j_plus - prev.j_minus) * params.lambda_inv
    if rec.i0 != prev.j_minus * params.lambda_inv:
        raise DataError(f"phase {k} grid does not start at y^-_{k - 1}")
    pos = half * (1.0 + z)
    vals = rec.refining_snapshot
    u = np.interp(pos, np.arange(vals.size, dtype=float), vals)
    return z, rec.h ** params.exponent * u


def profile_error(v_k, pred: PredictionSet, z=None) -> float:
    z = z_grid(len(v_k)) if z is None else z
    return float(np.max(np.abs(np.asarray(v_k) - pred.v_pred(z))))


@dataclass(frozen=True)
class SlopeFit:
    gamma_hat: float
    B_hat: float
    ratio: float
    residual: float      # RMS misfit of the line
    k: np.ndarray
    I2: np.ndarray


def interval_sq(records: Sequence, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """(k, I_k^2) with I_k = y_k^+ / h_{k+1}, the half-width in child nodes.

    The half-width is counted in spacings of the grid level k spawns, which is
    the normalisation under which the limiting slope is gamma.
    """
    ks = np.array([r.k for r in records], dtype=int)
    I = np.array([r.j_plus * params.lambda_inv for r in records], dtype=float)
    return ks, I * I


def slope_fit(records: Sequence, pred: PredictionSet, k_min: int = 20, k_max: int = 40) -> SlopeFit:
    """Least-squares line through (k, I_k^2) for k_min <= k <= k_max."""
    ks, I2 = interval_sq(records, pred.params)
    m = (ks >= k_min) & (ks <= k_max)
    if m.sum() < 3:
        raise InsufficientDataError(f"slope fit needs 3 phases in [{k_min}, {k_max}], got {int(m.sum())}")
    k, y = ks[m].astype(float), I2[m]
    slope, icpt = np.polyfit(k, y, 1)
    res = float(np.sqrt(np.mean((y - (slope * k + icpt)) ** 2)))
    return SlopeFit(float(slope), float(icpt), float(slope / pred.gamma), res, ks[m], y)


def blowup_limit_series(records: Sequence, frame, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """(k, (T - sigma_k)^{1/(p-1)} sup u_k), which should approach kappa."""
    ks = np.array([r.k for r in records], dtype=int)
    ttg = np.array([frame.time_to_go(int(k)) for k in ks])
    if np.any(ttg <= 0):
        raise DataError("phase time at or beyond the estimated blow-up time")
    sup = np.array([r.sup_u for r in records])
    return ks, ttg ** (1.0 / (params.p - 1.0)) * sup


# ---------------------------------------------------------------------------
# files


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT % v


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence]):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path: str) -> dict:
    """Columns of a report CSV as float arrays (``k`` as int)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    out = {}
    for i, name in enumerate(head):
        col = [r[i] for r in body]
        out[name] = np.array(col, dtype=int if name == "k" else float)
    return out


def write_columns(path: str, *cols):
    try:
        with open(path, "w") as fh:
            for row in zip(*cols):
                fh.write(" ".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def phase_rows(records: Sequence, pred: PredictionSet):
    P = pred.params
    for r in refining(records):
        yield (r.k, r.h, r.tau, r.tau_star, r.steps, r.steps / pred.N_limit, r.sigma_k,
               r.y_plus, r.sup_u, r.h ** P.exponent * r.sup_u)


def default_profile_ks(records: Sequence) -> list:
    ks = [r.k for r in refining(records)]
    if not ks:
        return []
    sel = {k for k in (10, 20, 30, 40) if k in ks}
    sel.add(max(ks))
    return sorted(sel)


def emit_reports(report, out_dir: str, pred: Optional[PredictionSet] = None,
                 profile_ks: Optional[Sequence[int]] = None, diagnostics=None,
                 n_profile: Optional[int] = None) -> dict:
    """Write the report files for a run and return the predictions summary.

    Files: ``phases.csv``, ``profile_<k>.csv``, ``similarity.csv``,
    ``predictions.json`` and two-column ``fig_*.dat`` plot data.
    """
    P = report.params
    cfg = report.config
    pred = pred or predictions(P, 2.0 * cfg.amplitude)
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out_dir}: {exc.strerror or exc}") from exc
    recs = list(report.records)
    write_csv(os.path.join(out_dir, "phases.csv"), PHASES_COLUMNS, phase_rows(recs, pred))

    z = z_grid(n_profile or cfg.profile_points)
    summary = {"N_limit": pred.N_limit, "gamma": pred.gamma, "B": pred.B,
               "B_continuous": pred.B_continuous, "kappa": kappa(P), "M": P.M,
               "T_estimate": None, "fit_residuals": {}, "profile_error": {}}
    ks = default_profile_ks(recs) if profile_ks is None else list(profile_ks)
    write_columns(os.path.join(out_dir, "fig_vpred.dat"), z, pred.v_pred(z))
    for k in ks:
        _, v = extract_vk(recs, k, P, z)
        vp = pred.v_pred(z)
        err = np.abs(v - vp)
        write_csv(os.path.join(out_dir, f"profile_{k}.csv"), PROFILE_COLUMNS, zip(z, v, vp, err))
        write_columns(os.path.join(out_dir, f"fig_vk_{k}.dat"), z, v)
        summary["profile_error"][str(k)] = float(err.max())

    ref = refining(recs)
    kk, I2 = interval_sq(ref, P)
    write_columns(os.path.join(out_dir, "fig_interval.dat"), kk, I2)
    write_columns(os.path.join(out_dir, "fig_interval_pred.dat"), kk, pred.gamma * kk + pred.B)
    try:
        fit = slope_fit(ref, pred)
        summary.update(slope=fit.gamma_hat, intercept=fit.B_hat, slope_ratio=fit.ratio)
        summary["fit_residuals"]["slope"] = fit.residual
    except InsufficientDataError:
        pass

    if diagnostics is None and cfg.similarity and len(recs) >= 5:
        from .similarity import run_diagnostics
        try:
            diagnostics = run_diagnostics(report)
        except InsufficientDataError:
            diagnostics = None
    sim_rows = []
    if diagnostics is not None:
        fr = diagnostics.frame
        summary["T_estimate"] = fr.T
        summary["b"] = fr.b
        summary["fit_residuals"]["blowup_time"] = fr.residual
        summary["lyapunov_violations"] = len(diagnostics.lyapunov.violations)
        if diagnostics.classification is not None:
            summary["behavior"] = diagnostics.classification.behavior
        sim_rows = list(diagnostics.rows())
    from .similarity import DiagnosticsSeries
    write_csv(os.path.join(out_dir, "similarity.csv"), DiagnosticsSeries.CSV_COLUMNS, sim_rows)

    path = os.path.join(out_dir, "predictions.json")
    try:
        with open(path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return summary
