"""Stochastic minimax problems with decision-dependent distributions.

The objective is ``Φ(z) = E_{w ~ D(z)} φ(z, w)``.  A problem carries the
payoff ``φ``, its gradient map ``ψ(z, w) = (∇_x φ, -∇_y φ)``, the
distributional map ``D`` and the constants used by the step-size rules.

All evaluators are vectorized: ``z`` has shape ``(..., n_x + n_y)`` and ``w``
has shape ``(..., m)``, with leading axes broadcast together.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import DecisionPoint, DimensionError, ProductBox

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _shape(size) -> tuple:
    if size is None:
        return ()
    if np.isscalar(size):
        return (int(size),)
    return tuple(int(s) for s in size)


def _as_array(z) -> np.ndarray:
    if isinstance(z, DecisionPoint):
        return z.values
    return np.asarray(z, dtype=float)


class GaussianBase:
    """Zero-mean normal base law, optionally truncated at ``±truncate`` sd."""

    def __init__(self, dim: int, scale: float = 1.0, truncate: Optional[float] = None):
        self.dim = dim
        self.scale = scale
        self.truncate = truncate

    def __call__(self, rng: np.random.Generator, size=()) -> np.ndarray:
        shape = _shape(size)
        draws = rng.standard_normal(shape + (self.dim,))
        if self.truncate is not None:
            # resampling keeps the law symmetric, hence zero-mean
            bad = np.abs(draws) > self.truncate
            while np.any(bad):
                draws[bad] = rng.standard_normal(int(bad.sum()))
                bad = np.abs(draws) > self.truncate
        return self.scale * draws

    def __repr__(self):
        return f"GaussianBase(dim={self.dim}, scale={self.scale}, truncate={self.truncate})"


class BootstrapBase:
    """Resample rows (with replacement) of a centred data matrix."""

    def __init__(self, data):
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("bootstrap data must be a nonempty 2-D array")
        self.data = data - data.mean(axis=0)
        self.dim = data.shape[1]

    def __call__(self, rng: np.random.Generator, size=()) -> np.ndarray:
        shape = _shape(size)
        idx = rng.integers(self.data.shape[0], size=shape)
        return self.data[idx]

    def __repr__(self):
        return f"BootstrapBase(rows={self.data.shape[0]}, dim={self.dim})"


class PointMassBase:
    """Degenerate base law at zero; removes all sampling noise."""

    def __init__(self, dim: int):
        self.dim = dim

    def __call__(self, rng: np.random.Generator, size=()) -> np.ndarray:
        shape = _shape(size)
        return np.zeros(shape + (self.dim,))


def apply_matrix(mat: np.ndarray, v) -> np.ndarray:
    """``v @ mat.T`` over leading axes with rounding independent of the batch shape.

    BLAS picks different kernels for different leading shapes, which breaks
    bit-identity between batched and single-replication runs.
    """
    return np.einsum("ij,...j->...i", mat, np.asarray(v, dtype=float))


@dataclass
class LocationScaleMap:
    """Distributional map ``w = A w0 + B z + c`` with ``w0`` drawn from ``base``.

    ``base(rng, size)`` must return zero-mean draws of shape ``size + (m,)``.
    """

    a_mat: np.ndarray
    b_mat: np.ndarray
    c_vec: np.ndarray
    base: Callable

    def __post_init__(self):
        self.a_mat = np.atleast_2d(np.asarray(self.a_mat, dtype=float))
        self.b_mat = np.atleast_2d(np.asarray(self.b_mat, dtype=float))
        self.c_vec = np.asarray(self.c_vec, dtype=float).reshape(-1)
        m = self.c_vec.size
        if self.a_mat.shape != (m, m) or self.b_mat.shape[0] != m:
            raise DimensionError(
                f"incompatible shapes A{self.a_mat.shape}, B{self.b_mat.shape}, c({m},)")

    @property
    def dim_w(self) -> int:
        return self.c_vec.size

    @property
    def dim_z(self) -> int:
        return self.b_mat.shape[1]

    def mean(self, z) -> np.ndarray:
        z = _as_array(z)
        return apply_matrix(self.b_mat, z) + self.c_vec

    def transform(self, z, w0) -> np.ndarray:
        """Push base draws ``w0`` through the affine map at decision ``z``."""
        z = _as_array(z)
        if z.shape[-1] != self.dim_z:
            raise DimensionError(f"decision has dimension {z.shape[-1]}, map expects {self.dim_z}")
        return apply_matrix(self.a_mat, w0) + self.mean(z)

    def sample(self, z, rng: np.random.Generator, count: int) -> np.ndarray:
        return sample_map(self, z, rng, count)


def sample_map(dist_map: LocationScaleMap, z, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` independent samples from ``D(z)``; shape ``(count, m)``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    z = _as_array(z)
    if z.ndim != 1 or z.size != dist_map.dim_z:
        raise DimensionError(f"decision must be a vector of length {dist_map.dim_z}")
    w0 = dist_map.base(rng, (count,))
    return dist_map.transform(z, w0)


def sensitivity(dist_map: LocationScaleMap, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Spectral norm of ``B``, i.e. the Wasserstein-1 Lipschitz constant of the map.

    Power iteration on ``BᵀB``.  Two deterministic starts are used (all-ones and
    a fixed pseudo-random vector) since a single structured start can sit in the
    null space of ``B``.
    """
    b = dist_map.b_mat
    n = b.shape[1]
    gram = b.T @ b
    starts = [np.ones(n), np.random.default_rng(0).standard_normal(n)]
    best = 0.0
    for v in starts:
        v = v / np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            u = gram @ v
            norm_u = np.linalg.norm(u)
            if norm_u == 0.0:
                lam = 0.0
                break
            v = u / norm_u
            lam_new = float(v @ gram @ v)
            if abs(lam_new - lam) <= tol * max(lam_new, 1.0):
                lam = lam_new
                break
            lam = lam_new
        best = max(best, lam)
    return float(np.sqrt(best))


@dataclass
class ProblemConstants:
    """Strong monotonicity ``gamma``, smoothness ``lip_l`` and sensitivity ``eps``.

    ``mono_full`` overrides the modulus ``gamma - 2 eps L`` of the full
    objective's gradient when the true modulus is known to be larger.
    ``lip_z`` and ``lip_w`` record the separate Lipschitz constants in the
    decision and in the data; ``lip_l`` should be their maximum.
    """

    gamma: float
    lip_l: float
    eps: float
    mono_full: Optional[float] = None
    lip_z: Optional[float] = None
    lip_w: Optional[float] = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.lip_l > 0:
            raise ValueError(f"lip_l must be positive, got {self.lip_l}")
        if not self.eps >= 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if self.mono_full is not None and not self.mono_full > 0:
            raise ValueError(f"mono_full must be positive when given, got {self.mono_full}")

    @property
    def ratio(self) -> float:
        """Contraction modulus ``eps L / gamma`` of the retraining map."""
        return self.eps * self.lip_l / self.gamma

    @property
    def full_modulus(self) -> float:
        if self.mono_full is not None:
            return self.mono_full
        return self.gamma - 2.0 * self.eps * self.lip_l

    def as_dict(self) -> dict:
        return {
            "gamma": self.gamma, "lip_l": self.lip_l, "eps": self.eps,
            "mono_full": self.mono_full, "lip_z": self.lip_z, "lip_w": self.lip_w,
            "ratio": self.ratio,
        }


@dataclass
class MinimaxProblem:
    payoff: Evaluator
    grad: Evaluator
    dist_map: LocationScaleMap
    n_x: int
    n_y: int
    constants: ProblemConstants
    decoupled_grad: Optional[Evaluator] = None
    full_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.n_x + self.n_y


def decoupled_gradient(problem: MinimaxProblem, z, z_fix, estimator: str = "closed_form",
                       count: Optional[int] = None, rng: Optional[np.random.Generator] = None,
                       return_se: bool = False):
    """Evaluate ``Ψ(z; z_fix) = E_{w ~ D(z_fix)} ψ(z, w)``.

    ``estimator="monte_carlo"`` averages ``count`` draws from ``D(z_fix)``;
    with ``return_se=True`` the per-coordinate standard error is returned too
    (zeros for the closed form).
    """
    z = _as_array(z)
    z_fix = _as_array(z_fix)
    if estimator == "closed_form":
        if problem.decoupled_grad is None:
            raise ValueError("problem has no closed-form decoupled gradient")
        g = np.asarray(problem.decoupled_grad(z, z_fix), dtype=float)
        return (g, np.zeros_like(g)) if return_se else g
    if estimator != "monte_carlo":
        raise ValueError(f"unknown estimator {estimator!r}")
    if count is None or count < 1:
        raise ValueError("monte_carlo estimator needs count >= 1")
    if rng is None:
        raise ValueError("monte_carlo estimator needs an rng")
    w = sample_map(problem.dist_map, z_fix, rng, count)
    g = problem.grad(z, w)
    mean = g.mean(axis=0)
    if not return_se:
        return mean
    se = g.std(axis=0, ddof=1) / np.sqrt(count) if count > 1 else np.full_like(mean, np.inf)
    return mean, se


def monotonicity_probe(problem: MinimaxProblem, box: ProductBox, pair_count: int,
                       rng: np.random.Generator, estimator: str = "closed_form",
                       count: int = 10_000) -> float:
    """Smallest observed ``<z - z', Ψ(z;v) - Ψ(z';v)> / ||z - z'||²`` over random triples.

    An empirical check of the strong-monotonicity modulus; for a problem
    meeting its assumptions the result is at least ``gamma``.
    """
    if pair_count < 1:
        raise ValueError("pair_count must be at least 1")
    ratios = []
    for _ in range(pair_count):
        z, z2, z_fix = box.sample_uniform(rng, 3)
        gap = np.dot(z - z2, z - z2)
        if gap < 1e-24:
            continue
        if estimator == "monte_carlo":
            # common random numbers so the noise cancels in the difference
            w = sample_map(problem.dist_map, z_fix, rng, count)
            diff = (problem.grad(z, w) - problem.grad(z2, w)).mean(axis=0)
        else:
            diff = (decoupled_gradient(problem, z, z_fix, estimator)
                    - decoupled_gradient(problem, z2, z_fix, estimator))
        ratios.append(float(np.dot(z - z2, diff) / gap))
    if not ratios:
        raise ValueError("all sampled pairs were degenerate")
    return min(ratios)
