from importlib.resources import files

import numpy as np
import pytest

from attracting_cylinders.problem_io import load_controller, load_problem

DATA = files("attracting_cylinders") / "data"


def data_path(name: str) -> str:
    return str(DATA / name)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def motivating():
    return load_problem(data_path("motivating.yaml"))


@pytest.fixture(scope="session")
def tracking():
    return load_problem(data_path("tracking.yaml"))


@pytest.fixture(scope="session")
def observer():
    return load_problem(data_path("observer.yaml"))


@pytest.fixture(scope="session")
def tracking_reference():
    return load_controller(data_path("tracking_reference_controller.yaml"))


@pytest.fixture(scope="session")
def observer_reference():
    return load_controller(data_path("observer_reference_controller.yaml"))


def random_low_rank(rng, m, n, r):
    """Gaussian ``m x n`` matrix of rank ``min(r, m, n)``."""
    return rng.standard_normal((m, r)) @ rng.standard_normal((r, n))


def random_psd(rng, n, r):
    F = rng.standard_normal((r, n))
    return F.T @ F


@pytest.fixture(scope="session")
def tracking_design(tracking):
    from attracting_cylinders.synthesis import synthesize

    return synthesize(tracking.problem, [tracking.options.preset_alpha])


@pytest.fixture(scope="session")
def observer_design(observer):
    from attracting_cylinders.synthesis import synthesize

    return synthesize(observer.problem, [observer.options.preset_alpha])
