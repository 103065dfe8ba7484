"""Decision vectors and axis-aligned product boxes.

A decision ``z = (x, y)`` stacks the minimizing block ``x`` (length ``n_x``)
on top of the maximizing block ``y`` (length ``n_y``).  Constraint sets are
boxes, so the Euclidean projection is an exact per-coordinate clamp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when vector and set dimensions disagree."""


class DegenerateBoxError(ValueError):
    """Raised when a box has an empty interior (some lower >= upper)."""


class OriginNotInteriorError(ValueError):
    """Raised when the origin is not strictly inside a box.

    Single-point zeroth-order iterations perturb the decision on a sphere and
    shrink the feasible set about the origin, which requires ``r B ⊆ Z`` for
    some ``r > 0``.
    """


@dataclass(frozen=True)
class DecisionPoint:
    """A stacked decision ``z = (x, y)`` with its block split recorded."""

    values: np.ndarray
    n_x: int
    n_y: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        object.__setattr__(self, "values", values)
        if self.n_x < 1 or self.n_y < 1:
            raise DimensionError("both blocks need at least one coordinate")
        if values.size != self.n_x + self.n_y:
            raise DimensionError(
                f"expected {self.n_x + self.n_y} values, got {values.size}")

    @property
    def x(self) -> np.ndarray:
        return self.values[:self.n_x]

    @property
    def y(self) -> np.ndarray:
        return self.values[self.n_x:]

    @classmethod
    def from_blocks(cls, x, y) -> "DecisionPoint":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return cls(np.concatenate([x, y]), x.size, y.size)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class ProductBox:
    """The set ``X × Y`` given by per-coordinate bounds."""

    lower: np.ndarray
    upper: np.ndarray
    n_x: int
    n_y: int

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if self.n_x < 1 or self.n_y < 1:
            raise DimensionError("both blocks need at least one coordinate")
        n = self.n_x + self.n_y
        if lower.size != n or upper.size != n:
            raise DimensionError(
                f"bounds must have length {n}, got {lower.size} and {upper.size}")
        if not np.all(lower < upper):
            bad = np.flatnonzero(~(lower < upper))
            raise DegenerateBoxError(
                f"box has empty interior at coordinates {bad.tolist()}")

    @classmethod
    def uniform(cls, lo: float, hi: float, n_x: int, n_y: int) -> "ProductBox":
        n = n_x + n_y
        return cls(np.full(n, lo), np.full(n, hi), n_x, n_y)

    @property
    def dim(self) -> int:
        return self.n_x + self.n_y

    def contains(self, z) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all((z >= self.lower) & (z <= self.upper)))

    def sample_uniform(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (self.dim,) if size is None else tuple(np.atleast_1d(size)) + (self.dim,)
        return rng.uniform(self.lower, self.upper, size=shape)


def _check_dim(box: ProductBox, z: np.ndarray):
    if z.shape[-1] != box.dim:
        raise DimensionError(f"point has dimension {z.shape[-1]}, box has {box.dim}")


def project(box: ProductBox, z):
    """Euclidean projection onto ``box``.

    Accepts a ``DecisionPoint`` or an array whose last axis is the decision
    dimension (leading axes are treated as a batch); the return type follows
    the input.
    """
    if isinstance(z, DecisionPoint):
        if (z.n_x, z.n_y) != (box.n_x, box.n_y):
            raise DimensionError("block split of point and box differ")
        return DecisionPoint(np.clip(z.values, box.lower, box.upper), z.n_x, z.n_y)
    z = np.asarray(z, dtype=float)
    _check_dim(box, z)
    return np.clip(z, box.lower, box.upper)


def shrink(box: ProductBox, delta: float) -> ProductBox:
    """Scale the box about the origin: ``(1 - delta) Z``."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    s = 1.0 - delta
    return ProductBox(s * box.lower, s * box.upper, box.n_x, box.n_y)


def diameter(box: ProductBox) -> float:
    return float(np.linalg.norm(box.upper - box.lower))


def inner_radius(box: ProductBox) -> float:
    """Radius of the largest origin-centred ball contained in ``box``."""
    if not (np.all(box.lower < 0.0) and np.all(box.upper > 0.0)):
        raise OriginNotInteriorError(
            "origin is not interior to the box; no ball r*B fits inside")
    return float(np.min(np.minimum(-box.lower, box.upper)))
