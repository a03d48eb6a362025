"""Run configuration: a flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored. Lists (sweep grids) are comma
separated. Example::

    p = 3
    a = 10
    hbar = 0.005
    phases = 40
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .nonlinearity import ModelParams

INITIAL_DATA = ("cosine",)


@dataclass(frozen=True)
class RunConfig:
    # model
    p: float = 3.0
    a: float = 10.0
    mu: float = 1.0
    # scheme
    hbar: float = 0.04
    c_delta: float = 0.25
    lambda_inv: int = 2
    alpha: float = 0.6
    phases: int = 40
    # initial data A (1 + cos(pi (x - shift)))
    initial_data: str = "cosine"
    amplitude: float = 2.0
    shift: float = 0.0
    # diagnostics
    similarity: bool = True
    snapshot_every: int = 1
    snapshot_levels: int = 3
    gamma: Optional[float] = None
    theta: float = 1.0
    c0: float = 1.0
    quad_radius: float = 20.0
    quad_nodes: int = 4001
    profile_points: int = 401
    # output
    output_dir: Optional[str] = None
    checkpoint_every: int = 5
    # sweep grid
    sweep_hbar: tuple = (0.04, 0.02, 0.01, 0.005)
    sweep_a: tuple = (0.1, 1.0, 10.0)

    def __post_init__(self):
        if int(self.phases) != self.phases or self.phases < 1:
            raise ConfigurationError("need at least one phase (K >= 1)", "phases")
        if self.initial_data not in INITIAL_DATA:
            raise ConfigurationError(
                f"unknown initial data {self.initial_data!r}; choose from {INITIAL_DATA}",
                "initial_data")
        if not self.amplitude > 0:
            raise ConfigurationError("amplitude must be positive", "amplitude")
        n = 1.0 / self.hbar if self.hbar > 0 else math.nan
        if not (self.hbar > 0 and abs(n - round(n)) < 1e-9 * n):
            raise ConfigurationError("1/hbar must be an integer", "hbar")
        for key in ("snapshot_every", "snapshot_levels", "checkpoint_every"):
            if getattr(self, key) < 1:
                raise ConfigurationError("must be >= 1", key)
        if self.quad_nodes < 11 or self.quad_nodes % 2 == 0:
            raise ConfigurationError("must be odd and >= 11", "quad_nodes")
        # ModelParams carries the remaining invariants
        self.model_params()

    @property
    def gamma_value(self) -> float:
        """Exponential weight gamma of J_a; defaults to 4(p+1)/(p-1)^2 * c0."""
        if self.gamma is not None:
            return float(self.gamma)
        return 4.0 * (self.p + 1.0) / (self.p - 1.0) ** 2 * self.c0

    def initial_function(self):
        A, shift = self.amplitude, self.shift
        return lambda x: A * (1.0 + np.cos(np.pi * (np.asarray(x) - shift)))

    def level0_nodes(self) -> np.ndarray:
        I = int(round(1.0 / self.hbar))
        return np.arange(-I, I + 1) * self.hbar

    def initial_values(self) -> np.ndarray:
        """Initial data at level-0 nodes, with Dirichlet zeros at x = +-1."""
        v = np.asarray(self.initial_function()(self.level0_nodes()), dtype=float)
        v[0] = v[-1] = 0.0
        return v

    def initial_sup(self) -> float:
        """Discrete sup-norm of the initial data (grid nodes)."""
        return float(np.max(self.initial_values()))

    def model_params(self) -> ModelParams:
        return ModelParams.build(self.p, self.a, self.mu, self.lambda_inv, self.alpha,
                                 self.c_delta, self.hbar, self.initial_sup())


_LIST_KEYS = {"sweep_hbar", "sweep_a"}
_BOOL_KEYS = {"similarity"}
_INT_KEYS = {"lambda_inv", "phases", "snapshot_every", "snapshot_levels",
             "checkpoint_every", "quad_nodes", "profile_points"}
_STR_KEYS = {"initial_data", "output_dir"}
_OPTIONAL = {"gamma", "output_dir"}


def _convert(key, raw):
    raw = raw.strip()
    try:
        if key in _OPTIONAL and raw.lower() in ("", "none"):
            return None
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if key in _LIST_KEYS:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if key in _INT_KEYS:
            f = float(raw)
            if f != int(f):
                raise ValueError(raw)
            return int(f)
        if key in _STR_KEYS:
            return raw
        return float(raw)
    except ValueError:
        raise ConfigurationError(f"cannot parse value {raw!r}", key) from None


def parse_config(text: str, **overrides) -> RunConfig:
    """Parse a flat key-value document into a validated :class:`RunConfig`."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, raw = line.split("=", 1)
        elif ":" in line:
            key, raw = line.split(":", 1)
        else:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        if key not in known:
            raise ConfigurationError(f"unknown key (line {lineno})", key)
        values[key] = _convert(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def emit_config(cfg: RunConfig, with_derived: bool = True) -> str:
    """Effective configuration as text; derived M0 and M are echoed as comments."""
    lines = [f"{f.name} = {_fmt(getattr(cfg, f.name))}" for f in fields(RunConfig)]
    if with_derived:
        mp = cfg.model_params()
        lines.append(f"# M0 = {mp.M0!r}")
        lines.append(f"# M = {mp.M!r}")
    return "\n".join(lines) + "\n"


def with_changes(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
