"""Multilevel threshold-coupled refinement.

Each phase k steps the finest level u_k until h_k^{2/(p-1)} ||u_k||_inf
reaches M, then a new level is spawned on the interval where the scaled
solution exceeds alpha M, with h_{k+1} = lambda h_k and tau_{k+1} = lambda^2 tau_k.

Scheduling. All levels restart aligned at the phase time sigma_k (every
level is rolled back to its linear-in-time state at sigma_k when a phase
closes), so level j+1 completes exactly lambda^{-2} steps per step of level j.
A parent always leads its child by at most one of its own steps; the child
takes its boundary values from the parent by linear interpolation in time,
and whenever the two clocks coincide the child's values are injected into
the parent at coincident nodes before the parent moves on.

An ancestor only updates the nodes it owns, i.e. those outside the open
interval covered by its child plus the two shared end nodes. The covered
nodes are overwritten by injection before they are ever read again.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import __version__
from .config import RunConfig, emit_config, parse_config
from .errors import (
    BlowUpOverflowError,
    CheckpointError,
    ConfigurationError,
    NoConcentrationError,
    RefinementCollapseError,
    SchedulingError,
)
from .fd_core import LevelState, explicit_update, is_symmetric, lerp, make_level, prolong, refine_indices, update_ranges
from .nonlinearity import ModelParams, reaction

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class PhaseRecord:
    """Outputs of refining phase k.

    ``j_minus``/``j_plus`` are the integer node indices of y^-/y^+ on the
    level-k grid (y = j h_k); ``i0`` is the first node index of the refining
    snapshot.
    """

    k: int
    tau_star: float
    steps: float
    sigma_k: float
    y_minus: float
    y_plus: float
    refining_snapshot: np.ndarray
    sup_u: float
    h: float
    tau: float
    i0: int
    j_minus: int
    j_plus: int

    @property
    def nodes(self) -> np.ndarray:
        return (self.i0 + np.arange(self.refining_snapshot.size)) * self.h

    def scaled_sup(self, params: ModelParams) -> float:
        return self.h ** params.exponent * self.sup_u

    def as_level(self, params: ModelParams) -> LevelState:
        return make_level(self.k, params, self.i0, self.refining_snapshot, self.tau_star,
                          self.sigma_k - self.tau_star)


@dataclass
class Snapshot:
    """Solution at absolute time ``t`` as nested pieces, finest first.

    Each piece is ``(i0, h, values)`` on nodes ``(i0 + i) h``.
    """

    t: float
    pieces: list
    k: int = -1

    def sample(self, x):
        """Values at ``x`` from the finest piece covering each point.

        Points outside every piece get 0 and ``covered`` False.
        Returns ``(values, covered)``.
        """
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        done = np.zeros(x.shape, dtype=bool)
        for i0, h, vals in self.pieces:
            lo, hi = i0 * h, (i0 + vals.size - 1) * h
            m = (~done) & (x >= lo) & (x <= hi)
            if m.any():
                out[m] = np.interp(x[m] / h - i0, np.arange(vals.size, dtype=float), vals)
                done |= m
        return out, done


@dataclass
class Hierarchy:
    params: ModelParams
    levels: list
    prev: list
    counts: list
    anchor: float = 0.0
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    symmetric: bool = True
    snapshot_every: int = 1
    snapshot_levels: int = 3
    react: Optional[Callable] = None

    def __post_init__(self):
        if self.react is None:
            p, a, mu = self.params.p, self.params.a, self.params.mu
            self.react = lambda v: reaction(v, p, a, mu)

    @property
    def phase(self) -> int:
        return len(self.levels) - 1

    @property
    def sigma(self) -> float:
        """Absolute time of the finest level."""
        f = self.phase
        return self.anchor + self.counts[f] * self.levels[f].tau

    def span(self, j: int) -> tuple[int, int]:
        """Indices in level j of the end nodes of level j+1."""
        child, parent = self.levels[j + 1], self.levels[j]
        r = self.params.lambda_inv
        lo = child.i0 // r - parent.i0
        return lo, lo + (child.n - 1) // r

    def check_invariants(self):
        """Step ratios and strict nesting of every level in its parent."""
        p = self.params
        for j, lvl in enumerate(self.levels):
            if not math.isclose(lvl.tau / lvl.h ** 2, p.c_delta, rel_tol=1e-12):
                raise SchedulingError(f"level {j}: tau/h^2 differs from C_Delta")
            if j:
                par = self.levels[j - 1]
                if not math.isclose(lvl.tau, par.tau / p.lambda_inv ** 2, rel_tol=1e-12):
                    raise SchedulingError(f"level {j}: time step not lambda^2 times the parent's")
                lo, hi = self.span(j - 1)
                if not (0 < lo < hi < par.n - 1 and lvl.i0 % p.lambda_inv == 0):
                    raise SchedulingError(f"level {j} is not strictly nested in level {j - 1}")


def init_hierarchy(config: RunConfig, params: Optional[ModelParams] = None) -> Hierarchy:
    """Level 0 on [-1, 1] holding the initial data, Dirichlet zeros at the ends."""
    values = config.initial_values()
    if params is None:
        params = config.model_params()
    else:
        if params.hbar != config.hbar:
            raise ConfigurationError(
                f"params.hbar={params.hbar!r} differs from the configured grid {config.hbar!r}", "hbar")
        expected = params.hbar ** params.exponent * float(values.max())
        if not math.isclose(params.M0, expected, rel_tol=1e-12):
            raise ConfigurationError(
                f"M0={params.M0!r} inconsistent with hbar^(2/(p-1)) * sup(initial data) = {expected!r}",
                "M0")
    if not np.all(values >= 0):
        raise ConfigurationError("initial data must be nonnegative", "initial_data")
    I = int(round(1.0 / params.hbar))
    lvl0 = make_level(0, params, -I, values)
    sym = is_symmetric(values)
    if not sym:
        log.warning("initial data not symmetric; symmetry checks disabled")
    return Hierarchy(params=params, levels=[lvl0], prev=[None], counts=[0], symmetric=sym,
                     snapshot_every=config.snapshot_every, snapshot_levels=config.snapshot_levels)


def _boundary(hier: Hierarchy, j: int) -> tuple[float, float]:
    """Boundary values for the next step of level j (parent stepped ahead)."""
    if j == 0:
        return 0.0, 0.0
    r = hier.params.lambda_inv ** 2
    n, npar = hier.counts[j], hier.counts[j - 1]
    num = n + 1 - (npar - 1) * r
    if not 0 < num <= r:
        raise SchedulingError(
            f"level {j} at step {n} is not bracketed by parent step {npar}")
    frac = num / r
    lo, hi = hier.span(j - 1)
    before, after = hier.prev[j - 1], hier.levels[j - 1]
    return (float(lerp(before.values[lo], after.values[lo], frac)),
            float(lerp(before.values[hi], after.values[hi], frac)))


def _inject(hier: Hierarchy, j: int):
    """Copy level j onto the coincident nodes of level j-1."""
    lo, hi = hier.span(j - 1)
    par = hier.levels[j - 1]
    vals = par.values.copy()
    vals[lo:hi + 1] = hier.levels[j].values[::hier.params.lambda_inv]
    hier.levels[j - 1] = LevelState(par.k, par.h, par.tau, par.i0, vals, par.clock, par.birth, par.parent)


def _advance(hier: Hierarchy, j: int):
    """Advance level j by one step, first advancing ancestors as needed."""
    if j > 0 and hier.counts[j] == hier.counts[j - 1] * hier.params.lambda_inv ** 2:
        _inject(hier, j)
        _advance(hier, j - 1)
    left, right = _boundary(hier, j)
    lvl = hier.levels[j]
    c = hier.params.c_delta
    with np.errstate(over="ignore", invalid="ignore"):
        if j == hier.phase:
            vals = explicit_update(lvl.values, c, lvl.tau, left, right, hier.react)
            ok = np.all(np.isfinite(vals))
        else:
            lo, hi = hier.span(j)
            vals = update_ranges(lvl.values, c, lvl.tau, hier.react, [(1, lo), (hi, lvl.n - 2)])
            vals[0], vals[-1] = left, right
            ok = np.all(np.isfinite(vals[:lo + 1])) and np.all(np.isfinite(vals[hi:]))
    if not ok:
        raise BlowUpOverflowError(
            f"level {j}: non-finite values at phase {hier.phase}; threshold M too lax")
    hier.counts[j] += 1
    clock = hier.anchor - lvl.birth + hier.counts[j] * lvl.tau
    hier.prev[j] = lvl
    hier.levels[j] = LevelState(lvl.k, lvl.h, lvl.tau, lvl.i0, vals, clock, lvl.birth, lvl.parent)


def run_phase(hier: Hierarchy, max_steps: Optional[int] = None) -> PhaseRecord:
    """Step the finest level until its scaled sup-norm reaches M.

    On return every level has been rolled back to the phase time sigma_k and
    the returned record is appended to ``hier.records``.
    """
    params = hier.params
    f = hier.phase
    M = params.M
    scale = hier.levels[f].h ** params.exponent
    m_prev = scale * float(hier.levels[f].values.max())
    if m_prev >= M:
        raise SchedulingError(f"phase {f} starts at or above the threshold")
    while True:
        _advance(hier, f)
        m_cur = scale * float(hier.levels[f].values.max())
        if m_cur >= M:
            break
        m_prev = m_cur
        if max_steps is not None and hier.counts[f] >= max_steps:
            raise SchedulingError(f"phase {f}: threshold not reached in {max_steps} steps")
    theta = (M - m_prev) / (m_cur - m_prev)
    n_prev = hier.counts[f] - 1
    fin = hier.levels[f]
    snapshot = lerp(hier.prev[f].values, fin.values, theta)
    # the finest level was born at the anchor; absolute times are too coarse
    # to difference once tau_k drops below eps * sigma
    tau_star = (n_prev + theta) * fin.tau
    sigma = hier.anchor + tau_star
    state = LevelState(fin.k, fin.h, fin.tau, fin.i0, snapshot, tau_star, fin.birth, fin.parent)
    lo, hi = refine_indices(state, params)
    if f == 0 and (lo <= 1 or hi >= state.n - 2):
        raise NoConcentrationError(
            "refinement interval reaches the physical boundary; no blow-up concentration")
    record = PhaseRecord(
        k=f, tau_star=tau_star, steps=tau_star / fin.tau, sigma_k=sigma,
        y_minus=(fin.i0 + lo) * fin.h, y_plus=(fin.i0 + hi) * fin.h,
        refining_snapshot=snapshot, sup_u=float(snapshot.max()), h=fin.h, tau=fin.tau,
        i0=fin.i0, j_minus=fin.i0 + lo, j_plus=fin.i0 + hi)
    _rollback(hier, n_prev + theta, state)
    hier.records.append(record)
    if f % hier.snapshot_every == 0:
        hier.snapshots.append(take_snapshot(hier))
    return record


def _rollback(hier: Hierarchy, finest_steps: float, finest_state: LevelState):
    """Bring every level to the phase time and restart the schedule there."""
    f = hier.phase
    r = hier.params.lambda_inv ** 2
    sigma = hier.anchor + finest_steps * hier.levels[f].tau
    for j in range(f):
        cur, before = hier.levels[j], hier.prev[j]
        frac = finest_steps / r ** (f - j) - (hier.counts[j] - 1)
        if not -1e-9 <= frac <= 1 + 1e-9:
            raise SchedulingError(f"level {j} does not bracket the phase time (frac={frac})")
        frac = min(1.0, max(0.0, frac))
        vals = lerp(before.values, cur.values, frac)
        hier.levels[j] = LevelState(cur.k, cur.h, cur.tau, cur.i0, np.array(vals, dtype=float),
                                    sigma - cur.birth, cur.birth, cur.parent)
    hier.levels[f] = finest_state
    hier.anchor = sigma
    hier.counts = [0] * (f + 1)
    hier.prev = [None] * (f + 1)


def take_snapshot(hier: Hierarchy) -> Snapshot:
    pieces = []
    for lvl in reversed(hier.levels[-hier.snapshot_levels:]):
        pieces.append((lvl.i0, lvl.h, lvl.values.copy()))
    return Snapshot(hier.anchor, pieces, hier.phase)


def spawn_level(hier: Hierarchy, record: PhaseRecord) -> Hierarchy:
    """Create level k+1 on [y_k^-, y_k^+] from the refining snapshot."""
    params = hier.params
    r = params.lambda_inv
    k = record.k
    if k != hier.phase:
        raise SchedulingError("record does not belong to the finest level")
    i0 = record.j_minus * r
    n = (record.j_plus - record.j_minus) * r + 1
    if n < 4:
        raise RefinementCollapseError(
            f"refinement interval [{record.y_minus}, {record.y_plus}] has only {n} fine nodes")
    values = prolong(record.refining_snapshot, i0 - r * record.i0, n, r)
    child = make_level(k + 1, params, i0, values, clock=0.0, birth=record.sigma_k, parent=k)
    hier.levels.append(child)
    hier.prev.append(None)
    hier.counts.append(0)
    return hier


@dataclass
class RunReport:
    config: RunConfig
    params: ModelParams
    records: list
    snapshots: list
    symmetric: bool = True

    @property
    def initial_sup(self) -> float:
        return self.config.initial_sup()


def run_simulation(config: RunConfig, checkpoint_dir: Optional[str] = None,
                   resume: Optional[str] = None, progress: Optional[Callable] = None,
                   params: Optional[ModelParams] = None) -> RunReport:
    """Run the initial phase plus ``config.phases`` refining phases.

    Checkpoints are written to ``checkpoint_dir`` every ``checkpoint_every``
    phases (and after the last one). ``resume`` continues from a checkpoint
    file; the result matches an uninterrupted run bit for bit.
    """
    if resume is not None:
        hier, saved = load_checkpoint(resume)
        if saved.phases != config.phases:
            config = parse_config(emit_config(saved, with_derived=False), phases=config.phases)
        else:
            config = saved
    else:
        hier = init_hierarchy(config, params)
    K = config.phases
    while len(hier.records) < K + 1:
        rec = run_phase(hier)
        if progress is not None:
            progress(rec)
        done = len(hier.records)
        if done <= K:
            spawn_level(hier, rec)
        if checkpoint_dir is not None and (done % config.checkpoint_every == 0 or done == K + 1):
            save_checkpoint(hier, config, os.path.join(checkpoint_dir, f"checkpoint_{done:03d}.npz"))
    return RunReport(config, hier.params, list(hier.records), list(hier.snapshots), hier.symmetric)


# ---------------------------------------------------------------------------
# checkpoints
#
# A checkpoint is an ``.npz`` archive taken at a phase boundary (all levels
# synchronised, schedule counters zero). Member ``meta`` holds UTF-8 JSON:
#   version, package_version, config (flat text), anchor, symmetric,
#   levels: [{k, i0, clock, birth, parent}], records: [{scalar fields}],
#   snapshots: [{t, pieces: [{i0, h}]}]
# Arrays: ``level_{j}``, ``record_{k}``, ``snap_{m}_{q}``.


def save_checkpoint(hier: Hierarchy, config: RunConfig, path: str):
    if any(c != 0 for c in hier.counts):
        raise CheckpointError("checkpoints are only taken at phase boundaries")
    meta = {
        "version": CHECKPOINT_VERSION,
        "package_version": __version__,
        "config": emit_config(config, with_derived=False),
        "anchor": hier.anchor,
        "symmetric": hier.symmetric,
        "levels": [{"k": l.k, "i0": l.i0, "clock": l.clock, "birth": l.birth, "parent": l.parent}
                   for l in hier.levels],
        "records": [{k: getattr(r, k) for k in ("k", "tau_star", "steps", "sigma_k", "y_minus",
                                                 "y_plus", "sup_u", "h", "tau", "i0", "j_minus", "j_plus")}
                    for r in hier.records],
        "snapshots": [{"t": s.t, "k": s.k, "pieces": [{"i0": p[0], "h": p[1]} for p in s.pieces]}
                      for s in hier.snapshots],
    }
    arrays = {f"level_{j}": l.values for j, l in enumerate(hier.levels)}
    arrays.update({f"record_{r.k}": r.refining_snapshot for r in hier.records})
    for m, s in enumerate(hier.snapshots):
        for q, piece in enumerate(s.pieces):
            arrays[f"snap_{m}_{q}"] = piece[2]
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        tmp = path + ".tmp.npz"
        np.savez_compressed(tmp, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
        os.replace(tmp, path)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str) -> tuple[Hierarchy, RunConfig]:
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            arrays = {k: data[k] for k in data.files if k != "meta"}
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")
    config = parse_config(meta["config"])
    params = config.model_params()
    levels = [make_level(m["k"], params, m["i0"], arrays[f"level_{j}"], m["clock"], m["birth"], m["parent"])
              for j, m in enumerate(meta["levels"])]
    records = [PhaseRecord(refining_snapshot=arrays[f"record_{m['k']}"], **m) for m in meta["records"]]
    snapshots = [Snapshot(s["t"], [(p["i0"], p["h"], arrays[f"snap_{m}_{q}"]) for q, p in enumerate(s["pieces"])], s["k"])
                 for m, s in enumerate(meta["snapshots"])]
    hier = Hierarchy(params=params, levels=levels, prev=[None] * len(levels), counts=[0] * len(levels),
                     anchor=meta["anchor"], records=records, snapshots=snapshots,
                     symmetric=meta["symmetric"], snapshot_every=config.snapshot_every,
                     snapshot_levels=config.snapshot_levels)
    return hier, config


def report_from_checkpoint(path: str) -> RunReport:
    """RunReport holding everything a checkpoint has recorded so far."""
    hier, config = load_checkpoint(path)
    return RunReport(config, hier.params, list(hier.records), list(hier.snapshots), hier.symmetric)


def latest_checkpoint(directory: str) -> str:
    """Path of the checkpoint with the most phases in ``directory``."""
    try:
        names = sorted(n for n in os.listdir(directory)
                       if n.startswith("checkpoint_") and n.endswith(".npz") and ".tmp" not in n)
    except OSError as exc:
        raise CheckpointError(f"cannot list {directory}: {exc.strerror or exc}") from exc
    if not names:
        raise CheckpointError(f"no checkpoints in {directory}")
    return os.path.join(directory, names[-1])
