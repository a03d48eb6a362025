"""Similarity-variable diagnostics.

With y = (x - b)/sqrt(T - t), s = -log(T - t) and w = (T - t)^{1/(p-1)} u,
this module evaluates the weighted energies

    E0[w] = int (|w'|^2/2 + w^2/(2(p-1)) - |w|^{p+1}/(p+1)) rho
    I[w]  = -e^{-(p+1)s/(p-1)} int H(e^{s/(p-1)} w) rho
    J_a   = (E0 + I) e^{(gamma/a) s^{-a}} + theta s^{-a}

with rho(y) = (4 pi)^{-1/2} e^{-y^2/4}, checks that J_a decreases along a
computed trajectory, and projects w - phi(s) on the Hermite eigenfunctions
h_m of L = d^2/dy^2 - (y/2) d/dy + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, InsufficientDataError, NumericalError
from .nonlinearity import ModelParams, PhiSolution, kappa, scaled_H


@dataclass(frozen=True)
class SimilarityFrame:
    """Blow-up point and time.

    ``remaining[k]`` is T - sigma_k for phase k, accumulated from phase
    durations so that it keeps full relative precision even when T - sigma_k
    is far below the resolution of T itself. ``b_index``/``b_h`` locate b as a
    grid node (b = b_index * b_h).
    """

    b: float
    T: float
    remaining: tuple = ()
    residual: float = 0.0
    b_index: Optional[int] = None
    b_h: Optional[float] = None

    def time_to_go(self, k: int) -> float:
        return self.remaining[k]


def estimate_blowup_time(records: Sequence, params: ModelParams, window: int = 5) -> SimilarityFrame:
    """Fit T from T - sigma_k = (kappa/M)^{p-1} h_k^2 over the last ``window`` phases.

    Each phase gives an estimate of R = T - sigma_K. The model error is
    relative (proportional to c h_k^2), so the least-squares fit weights the
    estimates by h_k^{-4}. ``residual`` is the weighted RMS relative misfit.
    """
    n = len(records)
    if n < max(window, 5):
        raise InsufficientDataError(f"need at least {max(window, 5)} phases, got {n}")
    durations = np.array([r.tau_star for r in records], dtype=float)
    sig = np.array([r.sigma_k for r in records], dtype=float)
    if np.any(durations[1:] <= 0) or np.any(np.diff(sig) < 0):
        raise DataError("phase times are not increasing")
    c = (kappa(params) / params.M) ** (params.p - 1.0)
    # S_k = sigma_K - sigma_k = sum of durations of the later phases
    suffix = np.concatenate((np.cumsum(durations[:0:-1])[::-1], [0.0]))
    model = c * np.array([r.h for r in records]) ** 2
    est = (model - suffix)[-window:]
    wts = model[-window:] ** -2.0
    R = float(np.sum(wts * est) / np.sum(wts))
    if not R > 0:
        raise DataError("estimated blow-up time does not exceed the last phase time")
    rel = (est - R) / model[-window:]
    resid = float(np.sqrt(np.sum(wts * rel ** 2) / np.sum(wts)))
    last = records[-1]
    j = int(last.i0 + int(np.argmax(last.refining_snapshot)))
    return SimilarityFrame(b=j * last.h, T=float(sig[-1] + R), remaining=tuple(R + suffix),
                           residual=resid, b_index=j, b_h=last.h)


# ---------------------------------------------------------------------------
# quadrature and Hermite basis


@dataclass(frozen=True, eq=False)
class WeightedQuadrature:
    """Trapezoid rule for int f rho on a uniform grid over [-R, R].

    For integrands with Gaussian decay the trapezoid rule converges
    geometrically, and the uniform grid lets gradients be taken by centered
    differences. The mass of rho beyond |y| = 20 is below 1e-20.
    """

    radius: float = 20.0
    n_nodes: int = 4001
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.linspace(-self.radius, self.radius, self.n_nodes)
        dy = y[1] - y[0]
        w = np.full(self.n_nodes, dy)
        w[0] = w[-1] = 0.5 * dy
        w *= np.exp(-y * y / 4.0) / math.sqrt(4.0 * math.pi)
        object.__setattr__(self, "nodes", y)
        object.__setattr__(self, "weights", w)

    @property
    def dy(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def gradient(self, values) -> np.ndarray:
        """Fourth-order centered differences (second order at the two end pairs)."""
        v = np.asarray(values, dtype=float)
        d = self.dy
        g = np.gradient(v, d, edge_order=2)
        g[2:-2] = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * d)
        return g

    def refined(self) -> "WeightedQuadrature":
        return WeightedQuadrature(self.radius, 2 * self.n_nodes - 1)


def hermite_poly(m: int, y):
    """h_m(y) = sum_k m!/(k!(m-2k)!) (-1)^k y^{m-2k}."""
    if m < 0:
        raise ValueError("degree must be nonnegative")
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for k in range(m // 2 + 1):
        c = math.factorial(m) / (math.factorial(k) * math.factorial(m - 2 * k)) * (-1) ** k
        out = out + c * y ** (m - 2 * k)
    return float(out) if out.ndim == 0 else out


class HermiteBasis:
    """Hermite eigenfunctions h_0..h_max on a quadrature grid, with cached norms."""

    def __init__(self, max_degree: int, quad: WeightedQuadrature):
        self.max_degree = max_degree
        self.quad = quad
        self.table = np.array([hermite_poly(m, quad.nodes) for m in range(max_degree + 1)])
        self.norms = np.array([quad.integrate(t * t) for t in self.table])

    def project(self, v, m: int) -> float:
        if not 0 <= m <= self.max_degree:
            raise ValueError(f"degree {m} outside basis 0..{self.max_degree}")
        return self.quad.integrate(v * self.table[m]) / self.norms[m]

    def coefficients(self, v) -> np.ndarray:
        return (self.table * self.quad.weights) @ v / self.norms


@lru_cache(maxsize=8)
def _basis(quad: WeightedQuadrature, max_degree: int) -> HermiteBasis:
    return HermiteBasis(max_degree, quad)


def hermite_project(v, m: int, q: WeightedQuadrature) -> float:
    """<v, h_m>_rho / <h_m, h_m>_rho."""
    return _basis(q, max(m, 8)).project(np.asarray(v, dtype=float), m)


# ---------------------------------------------------------------------------
# similarity transform


def to_similarity(snapshot, frame: SimilarityFrame, y_points, params: ModelParams):
    """Sample w(y) = (T - t)^{1/(p-1)} u(b + y sqrt(T - t)) from a snapshot.

    ``snapshot`` is an engine ``Snapshot`` (or a ``PhaseRecord``). Returns
    ``(w, s, truncated)`` where ``truncated`` marks points not covered by any
    stored level (their u is taken as 0).
    """
    pieces, k, t = _pieces(snapshot)
    if k is not None and 0 <= k < len(frame.remaining):
        ttg = frame.time_to_go(k)
    else:
        ttg = frame.T - t
    if not ttg > 0:
        raise DataError("snapshot time is not before the blow-up time")
    y = np.asarray(y_points, dtype=float)
    off = y * math.sqrt(ttg)
    u = np.zeros_like(y)
    done = np.zeros(y.shape, dtype=bool)
    for i0, h, vals in pieces:
        if frame.b_index is not None:
            pos = frame.b_index * (frame.b_h / h) - i0 + off / h
        else:
            pos = (frame.b + off) / h - i0
        m = (~done) & (pos >= 0) & (pos <= vals.size - 1)
        if m.any():
            u[m] = np.interp(pos[m], np.arange(vals.size, dtype=float), vals)
            done |= m
    w = ttg ** (1.0 / (params.p - 1.0)) * u
    return w, -math.log(ttg), ~done


def _pieces(snapshot):
    if hasattr(snapshot, "pieces"):
        return snapshot.pieces, getattr(snapshot, "k", None), snapshot.t
    return [(snapshot.i0, snapshot.h, snapshot.refining_snapshot)], snapshot.k, snapshot.sigma_k


# ---------------------------------------------------------------------------
# functionals


def _check(values):
    if not np.isfinite(values):
        raise NumericalError("non-finite quadrature value")
    return values


def functional_E0(w, q: WeightedQuadrature, params: ModelParams) -> float:
    w = np.asarray(w, dtype=float)
    p = params.p
    g = q.gradient(w)
    dens = 0.5 * g * g + w * w / (2.0 * (p - 1.0)) - np.abs(w) ** (p + 1.0) / (p + 1.0)
    return _check(q.integrate(dens))


def functional_I(w, s: float, q: WeightedQuadrature, params: ModelParams) -> float:
    return _check(-q.integrate(scaled_H(w, s, params)))


def functional_E(w, s: float, q: WeightedQuadrature, params: ModelParams) -> float:
    return functional_E0(w, q, params) + functional_I(w, s, q, params)


def j_weights(s, params: ModelParams, gamma: float, theta: float):
    """(e^{(gamma/a) s^{-a}}, theta s^{-a})."""
    sa = np.asarray(s, dtype=float) ** (-params.a)
    return np.exp(gamma / params.a * sa), theta * sa


def functional_J(w, s: float, q: WeightedQuadrature, params: ModelParams,
                 gamma: float, theta: float) -> float:
    factor, shift = j_weights(s, params, gamma, theta)
    return float(functional_E(w, s, q, params) * factor + shift)


@dataclass
class LyapunovReport:
    s: np.ndarray
    E0: np.ndarray
    I: np.ndarray
    E: np.ndarray
    J: np.ndarray
    dissipation: np.ndarray   # D_i over [s_i, s_{i+1}]
    defect: np.ndarray        # J_{i+1} - J_i - D_i
    rtol: float
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def non_increasing(self) -> bool:
        return bool(np.all(np.diff(self.J) <= self.rtol * np.abs(self.J[1:])))

    def summary(self) -> str:
        worst = float(np.max(self.defect / np.abs(self.J[1:]))) if self.defect.size else 0.0
        return (f"{len(self.s)} snapshots, s in [{self.s[0]:.3f}, {self.s[-1]:.3f}], "
                f"J_a {self.J[0]:.6g} -> {self.J[-1]:.6g}, worst defect/|J| = {worst:.3g}, "
                f"violations: {len(self.violations)}")


def lyapunov_check(trajectory, q: WeightedQuadrature, params: ModelParams,
                   gamma: float, theta: float, rtol: float = 1e-3) -> LyapunovReport:
    """Evaluate J_a along ``[(w, s), ...]`` and test the dissipation inequality.

    With D_i = -1/2 sum ((w_{i+1} - w_i)/ds)^2 rho ds, a violation is a step
    where J_{i+1} - J_i - D_i exceeds ``rtol * |J_{i+1}|``. D_i is never more
    negative than the exact time-integrated dissipation (Cauchy-Schwarz), so
    the discrete inequality is implied by the continuous one.
    """
    traj = list(trajectory)
    if not traj:
        raise InsufficientDataError("empty trajectory")
    s = np.array([float(t[1]) for t in traj])
    if np.any(np.diff(s) <= 0):
        raise DataError("similarity times must be strictly increasing")
    ws = [np.asarray(t[0], dtype=float) for t in traj]
    if any(w.shape != q.nodes.shape for w in ws):
        raise DataError("snapshots are not sampled on the quadrature grid")
    E0 = np.array([functional_E0(w, q, params) for w in ws])
    I = np.array([functional_I(w, si, q, params) for w, si in zip(ws, s)])
    E = E0 + I
    factor, shift = j_weights(s, params, gamma, theta)
    J = E * factor + shift
    ds = np.diff(s)
    D = np.array([-0.5 * q.integrate(((ws[i + 1] - ws[i]) / ds[i]) ** 2) * ds[i]
                  for i in range(len(ws) - 1)])
    defect = np.diff(J) - D
    bad = [i for i in range(defect.size) if defect[i] > rtol * abs(J[i + 1])]
    return LyapunovReport(s, E0, I, E, J, D, defect, rtol, bad)


# ---------------------------------------------------------------------------
# classification


@dataclass
class ClassificationReport:
    behavior: str               # "i", "ii", "iii-candidate" or "inconclusive"
    s: np.ndarray
    coefficients: np.ndarray    # rows: snapshots, columns: c_0..c_6 of w - phi
    scaled_c2: np.ndarray       # s * c_2(s)
    target: float               # -kappa/(4p)
    detail: str = ""


def classify_behavior(trajectory, phi: PhiSolution, q: WeightedQuadrature, params: ModelParams,
                      rtol: float = 0.15, flat_tol: float = 1e-8) -> ClassificationReport:
    """Classify w - phi(s) via its Hermite coefficients.

    * ``i``: every coefficient c_0..c_6 vanishes (w = phi).
    * ``ii``: s c_2(s) is within ``rtol`` of -kappa/(4p) on the last third.
    * ``iii-candidate``: c_2 decays exponentially while c_4 or c_6 dominates.
    """
    traj = list(trajectory)
    if len(traj) < 10:
        raise InsufficientDataError(f"need at least 10 snapshots, got {len(traj)}")
    s = np.array([float(t[1]) for t in traj])
    basis = _basis(q, 8)
    coeffs = np.array([basis.coefficients(np.asarray(w, dtype=float) - float(phi(si)))[:7]
                       for w, si in traj])
    target = -kappa(params) / (4.0 * params.p)
    sc2 = s * coeffs[:, 2]
    last = slice(len(s) - max(3, len(s) // 3), None)
    if np.max(np.abs(coeffs[last])) < flat_tol:
        return ClassificationReport("i", s, coeffs, sc2, target, "w - phi vanishes")
    dev = np.abs(sc2[last] / target - 1.0)
    if np.all(dev <= rtol):
        return ClassificationReport("ii", s, coeffs, sc2, target,
                                    f"max |s c_2 / target - 1| = {dev.max():.3g}")
    c2 = np.abs(coeffs[last, 2])
    higher = np.max(np.abs(coeffs[last][:, [4, 6]]), axis=1)
    if np.all(c2 > 0):
        slope = np.polyfit(s[last], np.log(c2), 1)[0]
        if slope < -0.25 and np.all(higher > c2):
            return ClassificationReport("iii-candidate", s, coeffs, sc2, target,
                                        f"log|c_2| slope {slope:.3g}")
    return ClassificationReport("inconclusive", s, coeffs, sc2, target,
                                f"max |s c_2 / target - 1| = {dev.max():.3g}")


# ---------------------------------------------------------------------------
# end-to-end diagnostics for a run


@dataclass
class DiagnosticsSeries:
    frame: SimilarityFrame
    s: np.ndarray
    sup_w: np.ndarray
    lyapunov: LyapunovReport
    coefficients: np.ndarray
    classification: Optional[ClassificationReport]
    truncated: np.ndarray      # fraction of rho-mass on truncated points per snapshot
    gamma: float
    theta: float

    CSV_COLUMNS = ("s", "E0", "I", "E", "J_a", "dissipation",
                   "c_0", "c_1", "c_2", "c_3", "c_4", "c_5", "c_6", "sup_w")

    def rows(self):
        L = self.lyapunov
        for i in range(len(self.s)):
            d = L.dissipation[i - 1] if i > 0 else float("nan")
            yield (self.s[i], L.E0[i], L.I[i], L.E[i], L.J[i], d,
                   *self.coefficients[i], self.sup_w[i])


def similarity_trajectory(report, frame: SimilarityFrame, q: WeightedQuadrature):
    """[(w, s, truncated_mass)] for every stored snapshot before T."""
    params = report.params
    out = []
    for snap in report.snapshots:
        k = getattr(snap, "k", -1)
        ttg = frame.time_to_go(k) if 0 <= k < len(frame.remaining) else frame.T - snap.t
        if not ttg > 0:
            continue
        w, s, trunc = to_similarity(snap, frame, q.nodes, params)
        out.append((w, s, q.integrate(trunc.astype(float))))
    return out


def run_diagnostics(report, gamma: Optional[float] = None, theta: Optional[float] = None,
                    quad: Optional[WeightedQuadrature] = None, s_from: Optional[float] = None,
                    window: int = 5, classify: bool = True) -> DiagnosticsSeries:
    """Frame estimation, J_a series and Hermite classification for a run."""
    from .nonlinearity import solve_phi  # local: keeps module import light

    cfg, params = report.config, report.params
    gamma = cfg.gamma_value if gamma is None else gamma
    theta = cfg.theta if theta is None else theta
    quad = quad or WeightedQuadrature(cfg.quad_radius, cfg.quad_nodes)
    frame = estimate_blowup_time(report.records, params, window)
    traj = similarity_trajectory(report, frame, quad)
    if s_from is not None:
        traj = [t for t in traj if t[1] >= s_from]
    if len(traj) < 2:
        raise InsufficientDataError("fewer than two usable snapshots")
    lyap = lyapunov_check([(w, s) for w, s, _ in traj], quad, params, gamma, theta)
    s = lyap.s
    s_lo = max(1.0, float(s[0]) - 1.0)
    c_star = abs(params.mu) * ((params.p - 1.0) / 2.0) ** params.a
    s_hi = float(s[-1]) + 40.0
    strict_hi = (10.0 * c_star) ** (1.0 / params.a) * 1.01 if c_star else 0.0
    phi = solve_phi(s_lo, max(s_hi, min(strict_hi, s_hi + 200.0)), params, strict=False)
    basis = _basis(quad, 8)
    coeffs = np.array([basis.coefficients(w - float(phi(si)))[:7] for w, si, _ in traj])
    cls = None
    if classify and len(traj) >= 10:
        cls = classify_behavior([(w, si) for w, si, _ in traj], phi, quad, params)
    return DiagnosticsSeries(frame, s, np.array([w.max() for w, _, _ in traj]), lyap, coeffs, cls,
                             np.array([t[2] for t in traj]), gamma, theta)
