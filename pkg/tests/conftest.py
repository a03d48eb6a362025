import functools

import pytest
from hypothesis import settings

from blowrefine.config import RunConfig
from blowrefine.engine import run_simulation

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def cached_run(hbar=0.04, a=10.0, phases=40, mu=1.0):
    """Runs shared across test modules; reports are treated as read-only."""
    return run_simulation(RunConfig(hbar=hbar, a=a, phases=phases, mu=mu))


@pytest.fixture(scope="session")
def run_cache():
    return cached_run
