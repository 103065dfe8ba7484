"""Stochastic gradient oracles.

Every oracle splits its randomness from its arithmetic: ``draw(rng, size)``
consumes the stream and returns the raw random inputs, ``evaluate(z, raw)``
turns them into gradient estimates.  The raw inputs never depend on ``z``
(location-scale maps push state-free base draws through an affine map), so
solvers can pre-draw noise in blocks and run many replications at once while
staying bit-identical to a single run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problem import MinimaxProblem, _as_array, _shape


def sample_sphere(dim: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniform draws on the unit sphere in ``R^dim`` (normalized Gaussians)."""
    g = rng.standard_normal(_shape(size) + (dim,))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def sample_ball(dim: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniform draws in the unit ball: sphere draw times ``U^(1/dim)``."""
    u = sample_sphere(dim, rng, size)
    r = rng.random(_shape(size)) ** (1.0 / dim)
    return u * r[..., None]


def sample_product_sphere(n_x: int, n_y: int, rng: np.random.Generator, size=None):
    """Independent uniform directions ``(u1, u2)`` on the spheres of each block."""
    if n_x < 1 or n_y < 1:
        raise ValueError("block dimensions must be positive")
    return sample_sphere(n_x, rng, size), sample_sphere(n_y, rng, size)


def sample_product_ball(n_x: int, n_y: int, rng: np.random.Generator, size=None):
    return sample_ball(n_x, rng, size), sample_ball(n_y, rng, size)


class WeibullNoise:
    """Additive noise ``nu * g/|g| * s`` with ``s ~ Weibull(shape=1/theta)``.

    The norm of each draw is sub-Weibull with tail parameter ``theta``, so
    tail fits can be validated against a known answer.
    """

    def __init__(self, dim: int, nu: float, theta: float):
        if nu < 0 or theta <= 0:
            raise ValueError("need nu >= 0 and theta > 0")
        self.dim = dim
        self.nu = nu
        self.theta = theta

    def __call__(self, rng: np.random.Generator, size=()) -> np.ndarray:
        shape = _shape(size)
        g = rng.standard_normal(shape + (self.dim,))
        s = rng.weibull(1.0 / self.theta, size=shape)
        return self.nu * (g / np.linalg.norm(g, axis=-1, keepdims=True)) * s[..., None]


@dataclass
class FirstOrderOracle:
    """Sample-average (``noise=None``) or noisy closed-form gradient oracle.

    With ``noise=None`` the estimate is the mean of ``ψ(z, w_i)`` over
    ``batch`` draws ``w_i ~ D(z)``.  Otherwise it is ``Ψ(z; z) + ξ`` with
    ``ξ`` from ``noise(rng, size)``; this models a noisy black box around the
    exact gradient and needs the closed-form decoupled gradient.
    """

    problem: MinimaxProblem
    batch: int = 1
    noise: Optional[object] = None

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if self.noise is not None and self.problem.decoupled_grad is None:
            raise ValueError("noisy oracle needs a closed-form decoupled gradient")

    @property
    def mode(self) -> str:
        return "sample_average" if self.noise is None else "noisy_closed_form"

    def draw(self, rng: np.random.Generator, size=()):
        shape = _shape(size)
        if self.noise is None:
            return self.problem.dist_map.base(rng, shape + (self.batch,))
        return self.noise(rng, shape)

    def evaluate(self, z, raw) -> np.ndarray:
        z = _as_array(z)
        p = self.problem
        if self.noise is None:
            zb = z[..., None, :]
            w = p.dist_map.transform(zb, raw)
            return p.grad(zb, w).mean(axis=-2)
        return p.decoupled_grad(z, z) + raw

    def __call__(self, z, rng: np.random.Generator) -> np.ndarray:
        return self.evaluate(z, self.draw(rng))


def first_order(oracle: FirstOrderOracle, z, rng: np.random.Generator) -> np.ndarray:
    return oracle(z, rng)


@dataclass
class ZerothOrderOracle:
    """Single-evaluation estimator built from one payoff value.

    Returns ``((n_x/δ) φ(z+δu, w) u1, -(n_y/δ) φ(z+δu, w) u2)`` with
    ``u = (u1, u2)`` uniform on the product of unit spheres and ``w`` drawn
    from ``D(z + δu)``.
    """

    problem: MinimaxProblem
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")

    def draw(self, rng: np.random.Generator, size=()):
        shape = _shape(size)
        u1, u2 = sample_product_sphere(self.problem.n_x, self.problem.n_y, rng, shape)
        w0 = self.problem.dist_map.base(rng, shape)
        return u1, u2, w0

    def evaluate(self, z, raw) -> np.ndarray:
        u1, u2, w0 = raw
        p = self.problem
        z = _as_array(z)
        zp = z + self.delta * np.concatenate([u1, u2], axis=-1)
        w = p.dist_map.transform(zp, w0)
        val = np.asarray(p.payoff(zp, w))[..., None]
        return np.concatenate([(p.n_x / self.delta) * val * u1,
                               -(p.n_y / self.delta) * val * u2], axis=-1)

    def __call__(self, z, rng: np.random.Generator, size=None) -> np.ndarray:
        return self.evaluate(z, self.draw(rng, size))


def zeroth_order(oracle: ZerothOrderOracle, z, rng: np.random.Generator, size=None) -> np.ndarray:
    return oracle(z, rng, size)


def smoothed_objective(problem: MinimaxProblem, z, delta: float, count: int,
                       rng: np.random.Generator, return_se: bool = False):
    """Monte Carlo estimate of ``Φ_δ(z) = E_{v ~ ball} Φ(z + δv)``.

    Each of the ``count`` ball draws is paired with one ``w ~ D(z + δv)``,
    which gives an unbiased estimate of the nested expectation.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    z = _as_array(z)
    v1, v2 = sample_product_ball(problem.n_x, problem.n_y, rng, count)
    zp = z + delta * np.concatenate([v1, v2], axis=-1)
    w = problem.dist_map.transform(zp, problem.dist_map.base(rng, (count,)))
    vals = np.asarray(problem.payoff(zp, w), dtype=float)
    mean = float(vals.mean())
    if not return_se:
        return mean
    se = float(vals.std(ddof=1) / np.sqrt(count)) if count > 1 else float("inf")
    return mean, se


def ball_smoothed_gradient(problem: MinimaxProblem, z, delta: float, count: int,
                           rng: np.random.Generator, return_se: bool = False):
    """Average of the closed-form full gradient over ``z + δv``, ``v`` uniform in the product ball.

    Independent reference for the mean of the zeroth-order estimator.
    """
    if problem.full_grad is None:
        raise ValueError("problem has no closed-form full gradient")
    z = _as_array(z)
    v1, v2 = sample_product_ball(problem.n_x, problem.n_y, rng, count)
    g = problem.full_grad(z + delta * np.concatenate([v1, v2], axis=-1))
    mean = g.mean(axis=0)
    if not return_se:
        return mean
    return mean, g.std(axis=0, ddof=1) / np.sqrt(count)
