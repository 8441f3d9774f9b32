"""Shared fixtures: the expensive simulations run once per session."""

import time
from importlib import resources

import pytest

from phonosim import geometry, params, reference


def _area(name):
    path = resources.files("phonosim") / "data" / name
    rows = geometry.load_area_table(str(path))
    return geometry.build_area_function(rows, 0.16)


@pytest.fixture(scope="session")
def phys():
    return params.PhysicalParams()


@pytest.fixture(scope="session")
def smoothing():
    return params.SmoothingCoefficients()


@pytest.fixture(scope="session")
def area_a():
    return _area("area_a.txt")


@pytest.fixture(scope="session")
def area_u():
    return _area("area_u.txt")


def _timed_run(pp, af, rc):
    # a few steps first so one-time kernel compilation stays out of the timing
    warm = params.RunConfig(duration=2e-5, dt=rc.dt, dx=rc.dx)
    reference.run_reference(pp, af, warm)
    start = time.perf_counter()
    run = reference.run_reference(pp, af, rc)
    elapsed = time.perf_counter() - start
    cycle = reference.extract_steady_cycle(run, rc.transient, rc.n_phase)
    return run, cycle, elapsed


@pytest.fixture(scope="session")
def ref_a(phys, area_a):
    """Open-vowel reference run: (run, steady cycle, solver seconds)."""
    return _timed_run(phys, area_a, params.RunConfig())


@pytest.fixture(scope="session")
def ref_u(phys, area_u):
    """Rounded-vowel reference run: (run, steady cycle, solver seconds)."""
    return _timed_run(phys, area_u, params.RunConfig())
