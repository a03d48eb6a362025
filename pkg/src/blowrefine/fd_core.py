"""Single-level explicit finite differences and the interpolation primitives.

A level lives on the nodes ``x_i = (i0 + i) * h`` for ``i = 0..n-1``; storing
the integer offset ``i0`` keeps nodes of nested levels exactly coincident.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import (
    AmbiguousProfileError,
    BlowUpOverflowError,
    DataError,
    DegenerateProfileError,
    DomainError,
    SchedulingError,
)
from .nonlinearity import ModelParams, reaction


@dataclass(frozen=True, eq=False)
class LevelState:
    """One grid level u_k.

    ``clock`` is the local time since the level was created and ``birth`` the
    absolute time of creation. ``parent`` is the index of the level that feeds
    the boundary values (``None`` for level 0, which has Dirichlet zeros).
    """

    k: int
    h: float
    tau: float
    i0: int
    values: np.ndarray
    clock: float = 0.0
    birth: float = 0.0
    parent: Optional[int] = None

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def nodes(self) -> np.ndarray:
        return (self.i0 + np.arange(self.n)) * self.h

    @property
    def domain(self) -> tuple[float, float]:
        return self.i0 * self.h, (self.i0 + self.n - 1) * self.h

    @property
    def time(self) -> float:
        return self.birth + self.clock

    def scaled_sup(self, params: ModelParams) -> float:
        return self.h ** params.exponent * float(np.max(self.values))


def make_level(k: int, params: ModelParams, i0: int, values, clock=0.0, birth=0.0, parent=None) -> LevelState:
    h = params.hbar / params.lambda_inv ** k
    tau = params.c_delta * h * h
    return LevelState(k, h, tau, int(i0), np.asarray(values, dtype=float), clock, birth, parent)


def explicit_update(values, c_delta, tau, left, right, react: Optional[Callable] = None,
                    diffusion: bool = True, out=None):
    """Return the next time level of the explicit scheme.

    ``react`` maps interior values to the reaction term; ``None`` disables
    the reaction and ``diffusion=False`` drops the Laplacian. Both switches
    exist for convergence tests against exact solutions.
    """
    u = values
    new = np.empty_like(u) if out is None else out
    inner = u[1:-1]
    acc = inner.copy()
    if diffusion:
        acc += c_delta * ((u[:-2] + u[2:]) - 2.0 * inner)
    if react is not None:
        acc += tau * react(inner)
    new[1:-1] = acc
    new[0] = left
    new[-1] = right
    return new


def update_ranges(values, c_delta, tau, react, ranges):
    """Explicit step restricted to node index ranges ``[(lo, hi), ...]``.

    Nodes outside the ranges keep their values; ranges must be interior.
    """
    new = values.copy()
    for lo, hi in ranges:
        if hi < lo:
            continue
        inner = values[lo:hi + 1]
        new[lo:hi + 1] = (inner + c_delta * ((values[lo - 1:hi] + values[lo + 1:hi + 2]) - 2.0 * inner)
                          + tau * react(inner))
    return new


def step_explicit(state: LevelState, boundary_left: float, boundary_right: float,
                  params: ModelParams) -> LevelState:
    """u_i <- u_i + C_Delta (u_{i-1} - 2u_i + u_{i+1}) + tau_k F(u_i)."""
    if not (math.isfinite(boundary_left) and math.isfinite(boundary_right)):
        raise DomainError("non-finite boundary value")
    p, a, mu = params.p, params.a, params.mu
    with np.errstate(over="ignore", invalid="ignore"):
        new = explicit_update(state.values, params.c_delta, state.tau,
                              boundary_left, boundary_right,
                              lambda v: reaction(v, p, a, mu))
    if not np.all(np.isfinite(new)):
        raise BlowUpOverflowError(
            f"level {state.k}: non-finite values after step at clock {state.clock:.6g}; "
            "the refinement threshold is too lax")
    return replace(state, values=new, clock=state.clock + state.tau)


def detect_threshold_crossing(prev: LevelState, next: LevelState, params: ModelParams) -> Optional[float]:
    """Local time tau* in [prev.clock, next.clock] where the scaled sup hits M.

    The scaled sup-norm h^{2/(p-1)} max(u) is interpolated linearly in time.
    Returns ``None`` when there is no upward crossing during this step.
    """
    M = params.M
    m0 = prev.scaled_sup(params)
    m1 = next.scaled_sup(params)
    if m1 < M or m0 >= M:
        return None
    theta = (M - m0) / (m1 - m0)
    return prev.clock + theta * (next.clock - prev.clock)


def crossing_fraction(prev: LevelState, next: LevelState, params: ModelParams) -> Optional[float]:
    """Same as :func:`detect_threshold_crossing`, as a fraction of the step."""
    M = params.M
    m0 = prev.scaled_sup(params)
    m1 = next.scaled_sup(params)
    if m1 < M or m0 >= M:
        return None
    return (M - m0) / (m1 - m0)


def refine_indices(state: LevelState, params: ModelParams) -> tuple[int, int]:
    """Array indices (lo, hi) of y^- and y^+ in ``state.values``.

    The interval is the connected run of interior nodes around the global
    maximiser on which h^{2/(p-1)} u >= alpha M. Domain end nodes are never
    returned, so a child interval always sits strictly inside its parent.
    """
    scaled = state.h ** params.exponent * state.values
    level = params.alpha * params.M
    interior = scaled[1:-1]
    if interior.size == 0 or not np.any(interior >= level):
        raise DegenerateProfileError(
            f"level {state.k}: scaled profile never reaches alpha*M = {level:.6g}")
    imax = int(np.argmax(interior))
    if interior[imax] < level:
        raise DegenerateProfileError(f"level {state.k}: maximum below alpha*M")
    above = interior >= level
    lo = imax
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = imax
    while hi < interior.size - 1 and above[hi + 1]:
        hi += 1
    if above[:lo].any() or above[hi + 1:].any():
        raise AmbiguousProfileError(
            f"level {state.k}: disconnected super-level sets of alpha*M")
    return lo + 1, hi + 1


def find_refine_interval(state_at_tau_star: LevelState, params: ModelParams) -> tuple[float, float]:
    """Grid coordinates (y^-, y^+) of the interval to be refined."""
    lo, hi = refine_indices(state_at_tau_star, params)
    s = state_at_tau_star
    return (s.i0 + lo) * s.h, (s.i0 + hi) * s.h


def interp_space(coarse: LevelState, fine_nodes) -> np.ndarray:
    """Piecewise-linear interpolation of ``coarse`` at ``fine_nodes``."""
    x = np.asarray(fine_nodes, dtype=float)
    lo, hi = coarse.domain
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        raise DomainError(f"interpolation node outside [{lo}, {hi}]")
    # work in index units so coincident nodes are hit exactly
    return np.interp(x / coarse.h - coarse.i0, np.arange(coarse.n, dtype=float), coarse.values)


def prolong(coarse, start: int, n: int, ratio: int) -> np.ndarray:
    """Linear interpolation onto ``n`` fine nodes with spacing h/ratio.

    Fine node m sits at coarse index (start + m)/ratio. The weights are
    integer ratios, and the two neighbour products are summed in either
    order with the same result, so mirror-symmetric input gives exactly
    mirror-symmetric output.
    """
    coarse = np.asarray(coarse, dtype=float)
    idx = start + np.arange(n)
    q, m = np.divmod(idx, ratio)
    if q.min() < 0 or q.max() > coarse.size - 1 or (q.max() == coarse.size - 1 and m[q == q.max()].any()):
        raise DomainError("prolongation nodes outside the coarse grid")
    nxt = np.minimum(q + 1, coarse.size - 1)
    out = ((ratio - m) * coarse[q] + m * coarse[nxt]) / ratio
    # coincident nodes are copied (3a/3 need not round to a)
    out[m == 0] = coarse[q[m == 0]]
    return out


def lerp(a, b, frac):
    """(1 - frac) a + frac b, exact at frac = 0 and frac = 1."""
    if frac == 0.0:
        return a
    if frac == 1.0:
        return b
    return a + frac * (b - a)


def interp_time(before: LevelState, after: LevelState, t_query: float, location: float) -> float:
    """Linear-in-time value of a parent node between two consecutive states."""
    t0, t1 = before.clock, after.clock
    tol = 1e-12 * max(abs(t0), abs(t1), after.tau)
    if not (t0 - tol <= t_query <= t1 + tol):
        raise SchedulingError(
            f"query time {t_query!r} outside bracket [{t0!r}, {t1!r}]")
    idx = location / before.h - before.i0
    i = int(round(idx))
    if abs(idx - i) > 1e-9 or not 0 <= i < before.n:
        raise DataError(f"location {location} is not a node of level {before.k}")
    frac = 0.0 if t1 == t0 else min(1.0, max(0.0, (t_query - t0) / (t1 - t0)))
    return float(lerp(before.values[i], after.values[i], frac))


def is_symmetric(values, rtol: float = 1e-12) -> bool:
    v = np.asarray(values)
    return bool(np.allclose(v, v[::-1], rtol=rtol, atol=0.0))
