"""Price competition between two charging-station operators.

Operator one sets prices ``x`` and operator two sets prices ``y`` in each of
``n`` zones.  Demands respond linearly to both price vectors,

    a = a0 + A1 x + A2 y + mu_a,    b = b0 + B1 x + B2 y + mu_b,

and the payoff is ``φ = ||Γ1 x||² - ||Γ2 y||² - <a + θ, x> + <b + θ, y>``.
``(a0, b0)`` is drawn from standardized demand data (bootstrap) or from a
truncated normal law.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .geometry import DimensionError, ProductBox
from .problem import (BootstrapBase, GaussianBase, LocationScaleMap, MinimaxProblem,
                      ProblemConstants, _as_array, apply_matrix, sensitivity)

MIN_DAYS = 30
CSV_HEADER = ("day", "hour", "station_id", "demand_kwh")
CHARGER_KW = (50, 150, 350)
PORT_COUNTS = (2, 6)


def _diag(v, n, name):
    v = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    if name is not None and not np.all(v > 0):
        raise ValueError(f"{name} must be strictly positive")
    return v


@dataclass
class EvParams:
    """Model parameters; matrices default to the symmetric cross-elastic market."""

    n_zones: int = 3
    gamma1: Optional[np.ndarray] = None
    gamma2: Optional[np.ndarray] = None
    a1: Optional[np.ndarray] = None
    a2: Optional[np.ndarray] = None
    b1: Optional[np.ndarray] = None
    b2: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    mu_a: Optional[np.ndarray] = None
    mu_b: Optional[np.ndarray] = None
    price_lo: float = -1.0
    price_hi: float = 2.0

    def __post_init__(self):
        n = self.n_zones
        if n < 1:
            raise ValueError("n_zones must be positive")
        eye = np.eye(n)
        self.gamma1 = _diag(1.0 if self.gamma1 is None else self.gamma1, n, "gamma1")
        self.gamma2 = _diag(1.0 if self.gamma2 is None else self.gamma2, n, "gamma2")
        self.a1 = -0.3 * eye if self.a1 is None else np.asarray(self.a1, dtype=float)
        self.a2 = 0.3 * eye if self.a2 is None else np.asarray(self.a2, dtype=float)
        self.b1 = self.a2.copy() if self.b1 is None else np.asarray(self.b1, dtype=float)
        self.b2 = self.a1.copy() if self.b2 is None else np.asarray(self.b2, dtype=float)
        for name in ("a1", "a2", "b1", "b2"):
            if getattr(self, name).shape != (n, n):
                raise DimensionError(f"{name} must be {n}x{n}")
        self.theta = _diag(0.0 if self.theta is None else self.theta, n, None)
        self.mu_a = _diag(0.0 if self.mu_a is None else self.mu_a, n, None)
        self.mu_b = _diag(0.0 if self.mu_b is None else self.mu_b, n, None)
        if not self.price_lo < 0.0 < self.price_hi:
            raise ValueError("price bounds must satisfy price_lo < 0 < price_hi")

    @property
    def b_mat(self) -> np.ndarray:
        return np.block([[self.a1, self.a2], [self.b1, self.b2]])

    @property
    def box(self) -> ProductBox:
        return ProductBox.uniform(self.price_lo, self.price_hi, self.n_zones, self.n_zones)

    def full_jacobian(self) -> np.ndarray:
        """Jacobian of the full-objective gradient map (constant, the model is quadratic)."""
        g1 = np.diag(2.0 * self.gamma1 ** 2)
        g2 = np.diag(2.0 * self.gamma2 ** 2)
        return np.block([[g1 - self.a1 - self.a1.T, self.b1.T - self.a2],
                         [self.a2.T - self.b1, g2 - self.b2 - self.b2.T]])

    def equilibrium_matrix(self) -> np.ndarray:
        """Matrix ``M`` with ``Ψ(z; z) = M z - rhs``."""
        g = np.diag(np.concatenate([2.0 * self.gamma1 ** 2, 2.0 * self.gamma2 ** 2]))
        return g - self.b_mat

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.mu_a + self.theta, self.mu_b + self.theta])


@dataclass
class DemandSeries:
    """Standardized demand samples, one column per station.

    The first ``n`` columns feed the operator-one demand ``a0`` and the last
    ``n`` the operator-two demand ``b0``.
    """

    station_ids: list
    values: np.ndarray
    raw: np.ndarray
    provenance: str
    metadata: dict = field(default_factory=dict)

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DemandSeries):
            return NotImplemented
        return (list(self.station_ids) == list(other.station_ids)
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.raw, other.raw))


def standardize(raw: np.ndarray, how: str = "var") -> np.ndarray:
    """Subtract each column's mean and divide by its variance (``var``) or sd (``std``)."""
    raw = np.asarray(raw, dtype=float)
    var = raw.var(axis=0, ddof=1)
    if np.any(var <= 0.0):
        bad = np.flatnonzero(var <= 0.0).tolist()
        raise ValueError(f"zero variance in columns {bad}; cannot standardize")
    centred = raw - raw.mean(axis=0)
    if how == "var":
        return centred / var
    if how == "std":
        return centred / np.sqrt(var)
    raise ValueError(f"unknown standardization {how!r}")


def synth_demand(n_zones: int = 3, n_days: int = 365, seed: int = 0,
                 standardize_how: str = "var") -> DemandSeries:
    """Seeded truncated standard normal (±5 sd) demand for ``2 n_zones`` stations.

    Charger power and port counts are drawn per station and kept as metadata;
    they do not alter the series.
    """
    if n_days < MIN_DAYS:
        raise ValueError(f"need at least {MIN_DAYS} days, got {n_days}")
    rng = np.random.default_rng(seed)
    raw = GaussianBase(2 * n_zones, truncate=5.0)(rng, (n_days,))
    ids = [f"a{i}" for i in range(n_zones)] + [f"b{i}" for i in range(n_zones)]
    hw = {sid: {"charger_kw": int(rng.choice(CHARGER_KW)), "ports": int(rng.choice(PORT_COUNTS))}
          for sid in ids}
    return DemandSeries(ids, standardize(raw, standardize_how), raw, f"synthetic({seed})",
                        {"hardware": hw, "standardize": standardize_how})


def save_demand_csv(series: DemandSeries, path, hour: int = 12) -> None:
    """Write the raw daily values in the loader's schema (one row per station-day)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for day in range(series.n_days):
            for j, sid in enumerate(series.station_ids):
                writer.writerow([day, hour, sid, repr(float(series.raw[day, j]))])


def load_demand_csv(path, hour: int = 12, standardize_how: str = "var") -> DemandSeries:
    """Read ``day,hour,station_id,demand_kwh`` rows, keep ``hour``, average per day and station.

    Stations are ordered by sorted id; only days present for every station
    are kept.
    """
    path = Path(path)
    sums: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            if int(float(row["hour"])) != hour:
                continue
            key = (row["station_id"], int(float(row["day"])))
            s = sums.setdefault(key, [0.0, 0])
            s[0] += float(row["demand_kwh"])
            s[1] += 1
    ids = sorted({k[0] for k in sums})
    if not ids:
        raise ValueError(f"{path}: no rows for hour {hour}")
    day_sets = [{d for (s, d) in sums if s == sid} for sid in ids]
    for sid, days in zip(ids, day_sets):
        if len(days) < MIN_DAYS:
            raise ValueError(f"station {sid} has {len(days)} days; need at least {MIN_DAYS}")
    days = sorted(set.intersection(*day_sets))
    if len(days) < MIN_DAYS:
        raise ValueError(f"only {len(days)} days shared by all stations; need {MIN_DAYS}")
    raw = np.array([[sums[(sid, d)][0] / sums[(sid, d)][1] for sid in ids] for d in days])
    return DemandSeries(ids, standardize(raw, standardize_how), raw, "csv",
                        {"path": str(path), "hour": hour, "standardize": standardize_how})


def build_problem(params: Optional[EvParams] = None,
                  demand: Optional[DemandSeries] = None) -> MinimaxProblem:
    """Assemble the charging-market problem.

    Without ``demand`` the base law is a standard normal truncated at ±5 sd;
    with it, rows of the standardized series are bootstrapped (days are
    resampled jointly across stations).
    """
    p = params or EvParams()
    n = p.n_zones
    if demand is None:
        base = GaussianBase(2 * n, truncate=5.0)
    else:
        if demand.values.shape[1] != 2 * n:
            raise DimensionError(
                f"demand has {demand.values.shape[1]} stations, model needs {2 * n}")
        base = BootstrapBase(demand.values)
    dist_map = LocationScaleMap(np.eye(2 * n), p.b_mat, np.concatenate([p.mu_a, p.mu_b]), base)
    g1sq, g2sq, theta = p.gamma1 ** 2, p.gamma2 ** 2, p.theta

    def payoff(z, w):
        z, w = np.asarray(z), np.asarray(w)
        x, y = z[..., :n], z[..., n:]
        a, b = w[..., :n], w[..., n:]
        return (np.sum(g1sq * x * x, axis=-1) - np.sum(g2sq * y * y, axis=-1)
                - np.sum((a + theta) * x, axis=-1) + np.sum((b + theta) * y, axis=-1))

    def grad(z, w):
        z, w = np.asarray(z), np.asarray(w)
        x, y = z[..., :n], z[..., n:]
        a, b = w[..., :n], w[..., n:]
        gx = 2.0 * g1sq * x - (a + theta)
        gy = 2.0 * g2sq * y - (b + theta)
        gx, gy = np.broadcast_arrays(gx, gy)
        return np.concatenate([gx, gy], axis=-1)

    def decoupled_grad(z, z_fix):
        # ψ is affine in w, so the expectation only needs the mean of D(z_fix)
        return grad(z, dist_map.mean(z_fix))

    jac = p.full_jacobian()
    rhs = p.rhs()

    def full_grad(z):
        return apply_matrix(jac, z) - rhs

    lip_z = 2.0 * float(np.max(np.concatenate([g1sq, g2sq])))
    lip_w = 1.0
    mono = float(np.linalg.eigvalsh(0.5 * (jac + jac.T)).min())
    constants = ProblemConstants(
        gamma=2.0 * float(np.min(np.concatenate([g1sq, g2sq]))),
        lip_l=max(lip_z, lip_w),
        eps=sensitivity(dist_map),
        mono_full=mono if mono > 0 else None,
        lip_z=lip_z, lip_w=lip_w,
    )
    meta = {"demand": None if demand is None else demand.provenance}
    return MinimaxProblem(payoff, grad, dist_map, n, n, constants, decoupled_grad, full_grad,
                          name="ev-market", meta=meta)


class EvReferences(NamedTuple):
    z_star: np.ndarray
    z_bar: np.ndarray
    clamped: bool


def _linear_root(mat, rhs, what):
    try:
        return np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(f"{what} first-order system is singular") from err


def closed_form_references(params: Optional[EvParams] = None) -> EvReferences:
    """Saddle point ``z*`` and equilibrium ``z̄`` from their linear optimality systems.

    When a root leaves the box, the reference is recomputed by a projected
    solver and ``clamped`` is set.
    """
    from .solvers import compute_equilibrium, compute_saddle

    p = params or EvParams()
    rhs = p.rhs()
    z_star = _linear_root(p.full_jacobian(), rhs, "saddle")
    z_bar = _linear_root(p.equilibrium_matrix(), rhs, "equilibrium")
    box = p.box
    clamped = False
    if not (box.contains(z_star) and box.contains(z_bar)):
        clamped = True
        problem = build_problem(p)
        if not box.contains(z_star):
            z_star = compute_saddle(problem, box, tolerance=1e-13)
        if not box.contains(z_bar):
            z_bar = compute_equilibrium(problem, box, tolerance=1e-13)
    return EvReferences(_as_array(z_star), _as_array(z_bar), clamped)
