"""Statistical checks of the convergence theory.

Sub-Weibull tail fits for gradient errors, high-probability envelopes,
empirical contraction of the retraining map, the equilibrium/saddle distance
bound, the mean-mixture identity of location-scale maps and rate fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .geometry import ProductBox, diameter
from .problem import LocationScaleMap, MinimaxProblem, _as_array
from .solvers import ContractionError, retraining_map

THETA_FLOOR = 0.01
THETA_CEIL = 5.0
MIN_SAMPLES = 1000


@dataclass(frozen=True)
class SubWeibullFit:
    """Tail certificate ``||ξ||_k <= nu_hat * k**theta_hat`` on the stored moments."""

    theta_hat: float
    nu_hat: float
    moments: tuple

    def passes(self, theta: float, nu: float) -> bool:
        """Whether ``(theta, nu)`` also bounds every stored moment."""
        return all(m <= nu * k ** theta * (1.0 + 1e-12) for k, m in self.moments)


def empirical_moments(samples, k_max: int = 10) -> np.ndarray:
    """``(mean |ξ|^k)^(1/k)`` for ``k = 1..k_max``, computed in log space."""
    a = np.abs(np.asarray(samples, dtype=float).reshape(-1))
    scale = a.max()
    if scale == 0.0:
        raise ValueError("all samples are zero; no tail to fit")
    r = a / scale
    ks = np.arange(1, k_max + 1)
    return scale * np.array([np.mean(r ** k) ** (1.0 / k) for k in ks])


def _gamma_profile(theta, ks):
    return (gammaln((ks + 1) * theta) - gammaln(theta)) / ks


def fit_subweibull(samples, k_max: int = 10, method: str = "gamma") -> SubWeibullFit:
    """Fit the moment growth of ``|ξ|``.

    ``method="gamma"`` matches the log-moments to the exact moment law of a
    variable with density proportional to ``exp(-(s/c)^(1/θ))`` on ``s >= 0``,
    ``||ξ||_k = c * (Γ((k+1)θ)/Γ(θ))^(1/k)``.  This recovers θ = 1/2 for
    Gaussians and θ = 1 for exponentials; other laws with the same tail
    exponent (e.g. Weibull) agree only as ``k`` grows.  ``"loglog"``
    is the plain least-squares slope of ``log ||ξ||_k`` on ``log k``, which is
    biased low for small ``k_max``.  Either way ``theta_hat`` is floored at
    0.01 and ``nu_hat = max_k ||ξ||_k / k^theta_hat``.
    """
    a = np.asarray(samples, dtype=float).reshape(-1)
    if a.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {a.size}")
    if k_max < 4:
        raise ValueError("k_max must be at least 4")
    mom = empirical_moments(a, k_max)
    ks = np.arange(1, k_max + 1)
    logm = np.log(mom)
    if np.ptp(logm) <= 1e-12 * max(1.0, abs(logm[0])):
        theta = THETA_FLOOR
    elif method == "loglog":
        theta = float(np.polyfit(np.log(ks), logm, 1)[0])
    elif method == "gamma":
        res = minimize_scalar(lambda th: np.var(logm - _gamma_profile(th, ks)),
                              bounds=(THETA_FLOOR, THETA_CEIL), method="bounded",
                              options={"xatol": 1e-10})
        theta = float(res.x)
    else:
        raise ValueError(f"unknown method {method!r}")
    theta = max(theta, THETA_FLOOR)
    nu = float(np.max(mom / ks ** theta))
    return SubWeibullFit(theta, nu, tuple((int(k), float(m)) for k, m in zip(ks, mom)))


def closure_check(xi1, xi2, fit1: SubWeibullFit, fit2: SubWeibullFit, k_max: int = 10,
                  n_se: float = 3.0) -> list:
    """Check ``||ξ1 + ξ2||_k <= (ν1 + ν2) k^max(θ1, θ2)`` for ``k = 1..k_max``.

    Returns ``(k, lhs, rhs, ok)`` rows; the left side gets ``n_se`` standard
    errors of slack (delta method on the k-th absolute moment).
    """
    s = np.abs(np.asarray(xi1, dtype=float) + np.asarray(xi2, dtype=float))
    theta = max(fit1.theta_hat, fit2.theta_hat)
    nu = fit1.nu_hat + fit2.nu_hat
    scale = s.max()
    r = s / scale
    rows = []
    for k in range(1, k_max + 1):
        pk = r ** k
        m = pk.mean()
        se_m = pk.std(ddof=1) / math.sqrt(s.size)
        lhs = scale * m ** (1.0 / k)
        # d(m^(1/k)) = m^(1/k - 1)/k * dm
        se = scale * m ** (1.0 / k - 1.0) / k * se_m
        rhs = nu * k ** theta
        rows.append((k, float(lhs), float(rhs), bool(lhs - n_se * se <= rhs)))
    return rows


@dataclass(frozen=True)
class EnvelopeParams:
    """Inputs of the high-probability envelope; ``p_fail`` is the allowed failure probability."""

    e0: float
    alpha: float
    nu_bar: float
    eta: float
    theta: float
    p_fail: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.p_fail < 1.0:
            raise ValueError(f"p_fail must lie in (0, 1), got {self.p_fail}")
        if not self.theta > 0:
            raise ValueError("theta must be positive")


def high_prob_bound(t: int, p: EnvelopeParams) -> float:
    """``α^t e0 + (2e/θ)^θ log^θ(2/p_fail) ν̄ η / (1 - α)``."""
    c_theta = (2.0 * math.e / p.theta) ** p.theta
    return (p.alpha ** t * p.e0
            + c_theta * math.log(2.0 / p.p_fail) ** p.theta * p.nu_bar * p.eta / (1.0 - p.alpha))


def estimate_h_contraction(problem: MinimaxProblem, box: ProductBox, pair_count: int,
                           inner_tolerance: float, rng: np.random.Generator,
                           min_gap: float = 1e-3) -> float:
    """Largest ``||H(z) - H(z')|| / ||z - z'||`` over random pairs in ``box``."""
    if problem.constants.ratio >= 1.0:
        raise ContractionError(f"eps*L/gamma = {problem.constants.ratio:g} >= 1")
    if pair_count < 1:
        raise ValueError("pair_count must be at least 1")
    worst = 0.0
    for _ in range(pair_count):
        z, z2 = box.sample_uniform(rng, 2)
        while np.linalg.norm(z - z2) < min_gap:
            z, z2 = box.sample_uniform(rng, 2)
        h1 = retraining_map(problem, box, z, inner_tolerance)
        h2 = retraining_map(problem, box, z2, inner_tolerance)
        worst = max(worst, float(np.linalg.norm(h1 - h2) / np.linalg.norm(z - z2)))
    return worst


class BoundCheck(NamedTuple):
    lhs: float
    rhs: float
    ok: bool


def check_distance_bound(problem: MinimaxProblem, box: ProductBox, z_star, z_bar) -> BoundCheck:
    """``||z* - z̄|| <= (εL/γ) * diameter(box)``."""
    lhs = float(np.linalg.norm(_as_array(z_star) - _as_array(z_bar)))
    rhs = problem.constants.ratio * diameter(box)
    return BoundCheck(lhs, rhs, lhs <= rhs)


def squared_norm(w: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", w, w)


def max_coordinate(w: np.ndarray) -> np.ndarray:
    return np.max(w, axis=-1)


class MixtureCheck(NamedTuple):
    """``ok``: two-sided agreement; ``ok_one_sided``: ``mean_mix <= mean_comb`` up to the slack."""

    mean_mix: float
    mean_comb: float
    se: float
    ok: bool
    ok_one_sided: bool


def check_mixture_equality(dist_map: LocationScaleMap, f: Callable, z, z2, tau: float,
                           count: int, rng: np.random.Generator, n_se: float = 3.0) -> MixtureCheck:
    """Compare ``E f(w)`` under ``D(τz + (1-τ)z')`` and under the mixture ``τD(z) + (1-τ)D(z')``.

    ``f`` must map an ``(count, m)`` array to ``count`` values.  The two
    samples are independent; ``se`` combines their standard errors.

    For a location-scale map the mixture draw is the mid-point draw plus the
    independent zero-mean shift ``B(T - (τz + (1-τ)z'))``, so for convex ``f``
    only ``E_mid f <= E_mix f`` is guaranteed.  Equality holds for affine
    ``f`` or when ``B z = B z'``; for ``f = ||.||²`` the gap is exactly
    ``τ(1-τ)||B(z - z')||²``.
    """
    if count < MIN_SAMPLES:
        raise ValueError(f"count must be at least {MIN_SAMPLES}")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    z, z2 = _as_array(z), _as_array(z2)
    mid = tau * z + (1.0 - tau) * z2
    f_mix = np.asarray(f(dist_map.transform(mid, dist_map.base(rng, (count,)))), dtype=float)
    pick = rng.random(count) < tau
    anchors = np.where(pick[:, None], z, z2)
    f_comb = np.asarray(f(dist_map.transform(anchors, dist_map.base(rng, (count,)))), dtype=float)
    se = math.sqrt(f_mix.var(ddof=1) / count + f_comb.var(ddof=1) / count)
    m1, m2 = float(f_mix.mean()), float(f_comb.mean())
    return MixtureCheck(m1, m2, se, abs(m1 - m2) <= n_se * se, m1 - m2 <= n_se * se)


def fit_rate(checkpoints: Sequence, kappa: float) -> float:
    """Least-squares slope of ``log mse`` against ``log(κ + t)``; ``-1`` means O(1/t)."""
    arr = np.asarray(checkpoints, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise ValueError("need at least 3 (t, mse) checkpoints")
    t, mse = arr[:, 0], arr[:, 1]
    if np.any(mse <= 0):
        raise ValueError("mse values must be positive")
    lo, hi = t.min(), t.max()
    if lo <= 0 or hi / lo < 100.0:
        raise ValueError("checkpoints must span at least two decades of positive t")
    return float(np.polyfit(np.log(kappa + t), np.log(mse), 1)[0])
