"""Shared trajectories.  Flow integrations are the expensive part of the suite,
so each one is computed at most once per session."""

import functools

import pytest

from pancake import FlowConfig, evolve_from_oval, resolve, run
from pancake.flow import circle


@functools.lru_cache(maxsize=None)
def oval_run(speed_id: str, R: float, N: int):
    return evolve_from_oval(R, resolve(speed_id, 2), FlowConfig(N=N))


@functools.lru_cache(maxsize=None)
def circle_run(speed_id: str, N: int, r0: float = 1.0):
    return run(circle(r0, N), resolve(speed_id, 2), FlowConfig(N=N))


@pytest.fixture(scope="session")
def mean_oval():
    """R = 8, mean curvature, n = 2, N = 512."""
    return oval_run("mean", 8.0, 512)


@pytest.fixture(scope="session")
def mean_oval_ref():
    return oval_run("mean", 8.0, 256)


@pytest.fixture(scope="session")
def pr2_oval():
    return oval_run("pr:2", 8.0, 512)


@pytest.fixture(scope="session")
def pr2_oval_ref():
    return oval_run("pr:2", 8.0, 256)


@pytest.fixture(scope="session")
def mean_circle():
    return circle_run("mean", 256)
