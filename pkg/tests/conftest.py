"""Shared fixtures: default bath/thermal objects and memoized experiment runs.

The heavier tests (acceptance, runner round-trips) share results through
``run_cached`` so each distinct scenario is computed once per session.
"""

import numpy as np
import pytest

from decouple_sim.baths import DEFAULT_THERMAL, ReservoirSpec
from decouple_sim.runner import run_experiment
from decouple_sim.scenario import parse_scenario

_RUN_CACHE = {}


def run_cached(text: str, workers=None):
    """Run a scenario given as literal text, memoized on the text."""
    if text not in _RUN_CACHE:
        _RUN_CACHE[text] = run_experiment(parse_scenario(text), workers=workers)
    return _RUN_CACHE[text]


@pytest.fixture(scope="session")
def thermal():
    return DEFAULT_THERMAL


@pytest.fixture(scope="session")
def ohmic_bath():
    return (ReservoirSpec(error_class="dephasing", eta=1.0 / 16.0, s=1),)


@pytest.fixture(scope="session")
def super_ohmic_bath():
    return (ReservoirSpec(error_class="dephasing", eta=1.0 / 16.0, s=3),)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260822)
