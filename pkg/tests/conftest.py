import numpy as np
import pytest

from ddsaddle.evmarket import EvParams, build_problem
from ddsaddle.geometry import ProductBox
from ddsaddle.problem import (LocationScaleMap, MinimaxProblem, PointMassBase, GaussianBase,
                             ProblemConstants)


@pytest.fixture
def ev_params():
    return EvParams()


@pytest.fixture
def ev_problem(ev_params):
    return build_problem(ev_params)


@pytest.fixture
def ev_box():
    return ProductBox.uniform(-1.0, 2.0, 3, 3)


def bilinear_problem(n=2):
    """``φ = <x, y>``: monotone but not strongly monotone."""
    dist = LocationScaleMap(np.eye(1), np.zeros((1, 2 * n)), np.zeros(1), PointMassBase(1))

    def payoff(z, w):
        z = np.asarray(z)
        return np.sum(z[..., :n] * z[..., n:], axis=-1)

    def grad(z, w):
        z = np.asarray(z)
        return np.concatenate([z[..., n:], -z[..., :n]], axis=-1)

    return MinimaxProblem(payoff, grad, dist, n, n, ProblemConstants(1.0, 1.0, 0.0),
                          decoupled_grad=lambda z, zf: grad(z, None))


def quadratic_problem(n_x=2, n_y=2, eps=0.0):
    """``φ = ||x||² - ||y||² - <w, z>`` with ``w ~ N(eps z, I)``."""
    n = n_x + n_y
    dist = LocationScaleMap(np.eye(n), eps * np.eye(n), np.zeros(n), GaussianBase(n))

    def payoff(z, w):
        z, w = np.asarray(z), np.asarray(w)
        return (np.sum(z[..., :n_x] ** 2, axis=-1) - np.sum(z[..., n_x:] ** 2, axis=-1)
                - np.sum(w * z, axis=-1))

    def grad(z, w):
        z, w = np.asarray(z), np.asarray(w)
        gx = 2 * z[..., :n_x] - w[..., :n_x]
        gy = 2 * z[..., n_x:] + w[..., n_x:]
        return np.concatenate(np.broadcast_arrays(gx, gy), axis=-1)

    def decoupled(z, zf):
        return grad(z, dist.mean(zf))

    return MinimaxProblem(payoff, grad, dist, n_x, n_y,
                          ProblemConstants(2.0, 2.0, eps), decoupled_grad=decoupled)


# -- acceptance reporting ---------------------------------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[number] = (title, report.outcome == "passed", round(report.duration, 2))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, secs = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  "
                                    f"{title} ({secs:.2f} s)")
