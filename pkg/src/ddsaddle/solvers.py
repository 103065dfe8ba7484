"""Projected primal-dual iterations for decision-dependent saddle problems.

Four schemes share one iteration core:

* EPD   ``z+ = Π_Z(z - η Ψ(z; z))`` with the exact decoupled gradient,
* SEPD  ``z+ = Π_Z(z - η_t Ω(z))`` with a first-order stochastic oracle,
* DFO   ``z+ = Π_{(1-δ)Z}(z - η_t Ω_δ(z))`` with the single-evaluation
  zeroth-order oracle,
* repeated retraining ``z+ = H(z)``, where ``H(z)`` solves the problem with
  the distribution frozen at ``z``.

Replication ``k`` of a batch always uses ``numpy.random.default_rng(seed + k)``
and consumes it exactly as a single run with that seed would, so batched and
one-at-a-time runs give bit-identical traces.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .geometry import ProductBox, diameter, inner_radius, project, shrink
from .oracles import FirstOrderOracle, ZerothOrderOracle, sample_product_ball
from .problem import MinimaxProblem, ProblemConstants, _as_array

# oracle noise is pre-drawn in blocks of this many iterations
NOISE_BLOCK = 256


class ContractionError(ValueError):
    """The problem constants do not give a contraction (e.g. eps*L >= gamma)."""


class ScheduleError(ValueError):
    """Step-size parameters violate a convergence condition."""


class SolverError(RuntimeError):
    """An iteration failed to reach its tolerance within its iteration cap."""


# -- step sizes ---------------------------------------------------------------

def step_size_upper_bound(gamma: float, lip_l: float, eps: float) -> float:
    """Right end of the step window ``(0, 2(γ - εL) / (L²(1 - ε²)))`` for EPD."""
    if eps * lip_l >= gamma:
        raise ContractionError(
            f"eps*L = {eps * lip_l:g} >= gamma = {gamma:g}: no contraction regime")
    if eps >= 1.0:
        raise ValueError(f"step window formula needs eps < 1, got {eps:g}")
    return 2.0 * (gamma - eps * lip_l) / (lip_l ** 2 * (1.0 - eps ** 2))


def contraction_factor(eta: float, gamma: float, lip_l: float, eps: float) -> float:
    """EPD contraction factor ``sqrt(1 - 2ηγ + η²L²) + ηεL``."""
    radicand = 1.0 - 2.0 * eta * gamma + eta ** 2 * lip_l ** 2
    if radicand < 0.0:
        raise ValueError(f"1 - 2*eta*gamma + eta^2 L^2 = {radicand:g} < 0")
    return math.sqrt(radicand) + eta * eps * lip_l


def validate_polynomial_schedule(ell: float, kappa: float, constants: ProblemConstants,
                                 mode: str = "sepd") -> list:
    """Check ``η_t = ell/(kappa + t)`` against the convergence conditions.

    Returns a list of human-readable violations (empty when valid).  ``sepd``
    uses the equilibrium modulus ``γ - εL``; ``dfo`` uses the full-objective
    modulus (``mono_full`` when set, else ``γ - 2εL``) and only needs
    ``kappa > 0``.
    """
    c = constants
    out = []
    if mode == "sepd":
        mod = c.gamma - c.eps * c.lip_l
        if mod <= 0:
            raise ContractionError(f"gamma - eps*L = {mod:g} <= 0")
        ell_min = 1.0 / (2.0 * mod)
        kappa_min = (1.0 + c.eps) ** 2 * c.lip_l ** 2 / mod ** 2
        if not ell > ell_min:
            out.append(f"ell = {ell:g} must exceed 1/(2(gamma - eps L)) = {ell_min:g}")
        if not kappa > kappa_min:
            out.append(f"kappa = {kappa:g} must exceed (1+eps)^2 L^2/(gamma - eps L)^2 = {kappa_min:g}")
    elif mode == "dfo":
        mod = c.full_modulus
        if mod <= 0:
            raise ContractionError(
                f"full-objective modulus gamma - 2 eps L = {mod:g} <= 0 and no mono_full given")
        ell_min = 1.0 / (2.0 * mod)
        if not ell > ell_min:
            out.append(f"ell = {ell:g} must exceed 1/(2 * modulus) = {ell_min:g}")
        if not kappa > 0:
            out.append(f"kappa = {kappa:g} must be positive")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out


@dataclass(frozen=True)
class StepSchedule:
    """Constant ``η_t = eta`` or polynomial ``η_t = ell / (kappa + t)``."""

    kind: str
    eta: Optional[float] = None
    ell: Optional[float] = None
    kappa: Optional[float] = None

    def __post_init__(self):
        if self.kind == "constant":
            if self.eta is None or not self.eta > 0:
                raise ScheduleError("constant schedule needs eta > 0")
        elif self.kind == "polynomial":
            if self.ell is None or self.kappa is None or not (self.ell > 0 and self.kappa > 0):
                raise ScheduleError("polynomial schedule needs ell > 0 and kappa > 0")
        else:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def constant(cls, eta: float) -> "StepSchedule":
        return cls("constant", eta=eta)

    @classmethod
    def polynomial(cls, ell: float, kappa: float) -> "StepSchedule":
        return cls("polynomial", ell=ell, kappa=kappa)

    def __call__(self, t):
        if self.kind == "constant":
            return self.eta if np.isscalar(t) else np.full(np.shape(t), self.eta)
        return self.ell / (self.kappa + t)

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class SolverConfig:
    schedule: StepSchedule
    max_iters: int = 1000
    seed: int = 0
    stop_tolerance: float = 0.0
    batch: int = 1
    delta: float = 0.05
    record_every: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if self.stop_tolerance < 0:
            raise ValueError("stop_tolerance must be nonnegative")
        if self.batch < 1:
            raise ValueError("batch must be at least 1")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = self.schedule.as_dict()
        return d


class References(NamedTuple):
    """Reference points for error columns: equilibrium and saddle (or perturbed saddle)."""

    z_bar: Optional[np.ndarray] = None
    z_star: Optional[np.ndarray] = None


@dataclass
class SolverTrace:
    """Recorded iterates.  Error columns are ``None`` when no reference was given."""

    t: np.ndarray
    z: np.ndarray
    eta: np.ndarray
    err_eq_sq: Optional[np.ndarray] = None
    err_saddle_sq: Optional[np.ndarray] = None
    residual: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    @property
    def final(self) -> np.ndarray:
        return self.z[-1]

    def rows(self):
        """Yield ``(t, z_t, eta_t, err_eq_sq, err_saddle_sq, residual)`` tuples."""
        for i in range(self.t.size):
            yield (int(self.t[i]), self.z[i], float(self.eta[i]),
                   None if self.err_eq_sq is None else float(self.err_eq_sq[i]),
                   None if self.err_saddle_sq is None else float(self.err_saddle_sq[i]),
                   None if self.residual is None else float(self.residual[i]))


# -- iteration core -------------------------------------------------------------

def _stack(raws):
    if isinstance(raws[0], tuple):
        return tuple(np.stack(parts) for parts in zip(*raws))
    return np.stack(raws)


def _take(raw, i):
    if isinstance(raw, tuple):
        return tuple(r[:, i] for r in raw)
    return raw[:, i]


def _sq_dist(z, ref):
    if ref is None:
        return None
    d = z - _as_array(ref)
    return np.einsum("...i,...i->...", d, d)


def _iterate(problem: MinimaxProblem, box: ProductBox, config: SolverConfig, z0,
             references: Optional[References], estimate: Callable, draw: Optional[Callable],
             seeds: Sequence[int], method: str, warn_list: list) -> list:
    """Run ``len(seeds)`` replications side by side and split them into traces."""
    t_start = time.perf_counter()
    n = problem.dim
    reps = len(seeds)
    horizon = config.max_iters
    sched = config.schedule
    refs = references or References()
    z = np.tile(np.asarray(_as_array(z0), dtype=float).reshape(1, n), (reps, 1))
    rngs = [np.random.default_rng(s) for s in seeds] if draw is not None else None
    closed = problem.decoupled_grad is not None

    def residual(zz, eta):
        if not closed:
            return None
        g = problem.decoupled_grad(zz, zz)
        d = zz - project(box, zz - eta * g)
        return np.sqrt(np.einsum("ij,ij->i", d, d))

    record_set = set(range(0, horizon + 1, config.record_every)) | {horizon}
    rec_t, rec_eta, rec_z, rec_res = [], [], [], []
    stop_t = np.full(reps, -1)
    active = np.ones(reps, dtype=bool)
    raw_block = None
    for t in range(horizon + 1):
        eta = float(sched(t))
        on_grid = t in record_set
        res = None
        newly = np.zeros(reps, dtype=bool)
        if config.stop_tolerance > 0 or on_grid:
            res = residual(z, eta)
            if config.stop_tolerance > 0 and res is not None:
                newly = active & (res <= config.stop_tolerance)
                stop_t[newly] = t
                active &= ~newly
        if on_grid or newly.any():
            rec_t.append(t)
            rec_eta.append(eta)
            rec_z.append(z.copy())
            rec_res.append(res)
        if t == horizon or not active.any():
            break
        if draw is not None:
            if t % NOISE_BLOCK == 0:
                raw_block = _stack([draw(rng, (NOISE_BLOCK,)) for rng in rngs])
            raw = _take(raw_block, t % NOISE_BLOCK)
        else:
            raw = None
        z_new = project(box, z - eta * estimate(z, raw))
        z[active] = z_new[active]

    rec_t = np.asarray(rec_t)
    rec_eta = np.asarray(rec_eta)
    rec_z = np.stack(rec_z)
    record_mask = np.isin(rec_t, sorted(record_set))
    traces = []
    wall = time.perf_counter() - t_start
    for r in range(reps):
        if stop_t[r] >= 0:
            keep = (record_mask & (rec_t <= stop_t[r])) | (rec_t == stop_t[r])
        else:
            keep = record_mask
        zs = rec_z[keep, r]
        res = None
        if closed:
            res = np.array([rec_res[i][r] for i in np.flatnonzero(keep)])
        meta = {
            "method": method,
            "seed": int(seeds[r]),
            "config": config.as_dict(),
            "stopped_at": int(stop_t[r]) if stop_t[r] >= 0 else None,
            "warnings": list(warn_list),
            "wall_time": wall / reps,
        }
        traces.append(SolverTrace(rec_t[keep], zs, rec_eta[keep], _sq_dist(zs, refs.z_bar),
                                  _sq_dist(zs, refs.z_star), res, meta))
    return traces


def _window_warning(problem: MinimaxProblem, schedule: StepSchedule) -> list:
    if schedule.kind != "constant":
        return []
    c = problem.constants
    try:
        upper = step_size_upper_bound(c.gamma, c.lip_l, c.eps)
    except ValueError as err:
        msg = f"step window unavailable: {err}"
    else:
        if 0 < schedule.eta < upper:
            return []
        msg = f"eta = {schedule.eta:g} outside the contraction window (0, {upper:g})"
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return [msg]


def _default_z0(box: ProductBox, z0):
    if z0 is None:
        return project(box, np.zeros(box.dim))
    return _as_array(z0)


def _epd_parts(problem, config, estimator):
    if estimator == "closed_form":
        if problem.decoupled_grad is None:
            raise ValueError("EPD needs a closed-form decoupled gradient (or estimator='monte_carlo')")
        return (lambda z, raw: problem.decoupled_grad(z, z)), None
    if estimator == "monte_carlo":
        oracle = FirstOrderOracle(problem, batch=config.batch)
        return oracle.evaluate, oracle.draw
    raise ValueError(f"unknown estimator {estimator!r}")


def run_epd(problem: MinimaxProblem, box: ProductBox, config: SolverConfig,
            references: Optional[References] = None, z0=None,
            estimator: str = "closed_form") -> SolverTrace:
    """Deterministic equilibrium primal-dual with a constant step.

    ``estimator="monte_carlo"`` replaces ``Ψ(z;z)`` by a ``config.batch``
    sample average at every step.
    """
    if config.schedule.kind != "constant":
        raise ScheduleError("EPD uses a constant step size")
    warn_list = _window_warning(problem, config.schedule)
    estimate, draw = _epd_parts(problem, config, estimator)
    return _iterate(problem, box, config, _default_z0(box, z0), references, estimate, draw,
                    [config.seed], "epd", warn_list)[0]


def _sepd_parts(problem, config, noise):
    sched = config.schedule
    warn_list = []
    if sched.kind == "polynomial":
        bad = validate_polynomial_schedule(sched.ell, sched.kappa, problem.constants, "sepd")
        if bad:
            raise ScheduleError("; ".join(bad))
    else:
        warn_list = _window_warning(problem, sched)
    oracle = FirstOrderOracle(problem, batch=config.batch, noise=noise)
    return oracle, warn_list


def run_sepd(problem: MinimaxProblem, box: ProductBox, config: SolverConfig,
             references: Optional[References] = None, z0=None, noise=None) -> SolverTrace:
    """Stochastic equilibrium primal-dual driven by a first-order oracle.

    Polynomial schedules are validated before running; ``noise`` selects the
    noisy closed-form oracle instead of sample averaging.
    """
    oracle, warn_list = _sepd_parts(problem, config, noise)
    return _iterate(problem, box, config, _default_z0(box, z0), references, oracle.evaluate,
                    oracle.draw, [config.seed], "sepd", warn_list)[0]


def _dfo_parts(problem, box, config):
    r = inner_radius(box)
    delta = config.delta
    if not 0 < delta <= r:
        raise ValueError(f"delta = {delta:g} must lie in (0, inner radius {r:g}]")
    sched = config.schedule
    if sched.kind != "polynomial":
        raise ScheduleError("DFO uses a polynomial step schedule")
    bad = validate_polynomial_schedule(sched.ell, sched.kappa, problem.constants, "dfo")
    if bad:
        raise ScheduleError("; ".join(bad))
    return ZerothOrderOracle(problem, delta), shrink(box, delta)


def run_dfo(problem: MinimaxProblem, box: ProductBox, config: SolverConfig,
            references: Optional[References] = None, z0=None) -> SolverTrace:
    """Zeroth-order primal-dual: one payoff evaluation per iteration.

    Iterates are projected onto ``(1 - δ) Z``.  Pass the perturbed saddle
    point as ``references.z_star`` to record distances to it.
    """
    oracle, inner_box = _dfo_parts(problem, box, config)
    return _iterate(problem, inner_box, config, _default_z0(inner_box, z0), references,
                    oracle.evaluate, oracle.draw, [config.seed], "dfo", [])[0]


def run_replications(method: str, problem: MinimaxProblem, box: ProductBox,
                     config: SolverConfig, reps: int, references: Optional[References] = None,
                     z0=None, noise=None) -> list:
    """Run ``reps`` replications; replication ``k`` uses seed ``config.seed + k``.

    The replications are advanced together (vectorized), but each consumes
    its own stream exactly like the corresponding single run.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    seeds = [config.seed + k for k in range(reps)]
    if method == "sepd":
        oracle, warn_list = _sepd_parts(problem, config, noise)
        return _iterate(problem, box, config, _default_z0(box, z0), references,
                        oracle.evaluate, oracle.draw, seeds, "sepd", warn_list)
    if method == "dfo":
        oracle, inner_box = _dfo_parts(problem, box, config)
        return _iterate(problem, inner_box, config, _default_z0(inner_box, z0), references,
                        oracle.evaluate, oracle.draw, seeds, "dfo", [])
    if method == "epd":
        if config.schedule.kind != "constant":
            raise ScheduleError("EPD uses a constant step size")
        warn_list = _window_warning(problem, config.schedule)
        estimate, draw = _epd_parts(problem, config, "closed_form")
        return _iterate(problem, box, config, _default_z0(box, z0), references, estimate,
                        draw, seeds, "epd", warn_list)
    raise ValueError(f"unknown method {method!r}")


def aggregate(traces: Sequence[SolverTrace]) -> dict:
    """Mean and standard error of the error columns across replications.

    Reduction runs over replications in the order given.  All traces must
    share their recorded iteration indices.
    """
    t = traces[0].t
    for tr in traces[1:]:
        if tr.t.shape != t.shape or np.any(tr.t != t):
            raise ValueError("traces were recorded at different iterations")
    out = {"t": t.copy()}
    for col in ("err_eq_sq", "err_saddle_sq"):
        cols = [getattr(tr, col) for tr in traces]
        if any(c is None for c in cols):
            out[f"mean_{col}"] = None
            out[f"se_{col}"] = None
            continue
        mat = np.stack(cols)
        out[f"mean_{col}"] = mat.mean(axis=0)
        out[f"se_{col}"] = (mat.std(axis=0, ddof=1) / np.sqrt(len(traces))
                            if len(traces) > 1 else np.zeros(t.size))
    return out


# -- reference points and retraining ---------------------------------------------

def _fixed_point(step: Callable, z0: np.ndarray, tolerance: float, max_iters: int, what: str):
    z = z0
    for _ in range(max_iters):
        z_new = step(z)
        if np.linalg.norm(z_new - z) <= tolerance:
            return z_new
        z = z_new
    raise SolverError(f"{what} did not reach residual {tolerance:g} in {max_iters} iterations")


def retraining_map(problem: MinimaxProblem, box: ProductBox, z_fix, tolerance: float = 1e-10,
                   z_init=None, max_iters: int = 100_000) -> np.ndarray:
    """``H(z_fix)``: saddle point of the problem with the distribution frozen at ``z_fix``.

    Solved by projected primal-dual on ``Ψ(·; z_fix)`` with step ``γ/L²``
    until the fixed-point residual drops to ``tolerance``.
    """
    if problem.decoupled_grad is None:
        raise ValueError("retraining needs a closed-form decoupled gradient")
    z_fix = _as_array(z_fix)
    c = problem.constants
    eta = c.gamma / c.lip_l ** 2
    start = _default_z0(box, z_init)
    return _fixed_point(lambda z: project(box, z - eta * problem.decoupled_grad(z, z_fix)),
                        start, tolerance, max_iters, "frozen-distribution solve")


def repeated_retraining(problem: MinimaxProblem, box: ProductBox, z0, inner_tolerance: float = 1e-10,
                        outer_iters: int = 50, inner_max_iters: int = 100_000) -> list:
    """Outer sequence ``z_{t+1} = H(z_t)``; returns ``[z_0, ..., z_outer_iters]``."""
    if problem.constants.ratio >= 1.0:
        warnings.warn(f"eps*L/gamma = {problem.constants.ratio:g} >= 1; retraining may not contract",
                      RuntimeWarning, stacklevel=2)
    seq = [_as_array(z0).copy()]
    for _ in range(outer_iters):
        seq.append(retraining_map(problem, box, seq[-1], inner_tolerance, seq[-1], inner_max_iters))
    return seq


def compute_equilibrium(problem: MinimaxProblem, box: ProductBox, tolerance: float = 1e-12,
                        z0=None, max_iters: int = 1_000_000) -> np.ndarray:
    """Equilibrium point by EPD with half the maximal theory step."""
    c = problem.constants
    if c.ratio >= 1.0:
        raise ContractionError(f"eps*L/gamma = {c.ratio:g} >= 1: no contraction regime")
    if problem.decoupled_grad is None:
        raise ValueError("compute_equilibrium needs a closed-form decoupled gradient")
    eta = 0.5 * step_size_upper_bound(c.gamma, c.lip_l, c.eps)
    return _fixed_point(lambda z: project(box, z - eta * problem.decoupled_grad(z, z)),
                        _default_z0(box, z0), tolerance, max_iters, "EPD")


def compute_saddle(problem: MinimaxProblem, box: ProductBox, tolerance: float = 1e-12, z0=None,
                   step: Optional[float] = None, max_iters: int = 1_000_000,
                   gradient: Optional[Callable] = None) -> np.ndarray:
    """Saddle point of the full objective by projected gradient descent-ascent.

    Uses ``problem.full_grad`` (or ``gradient``) and the full-objective modulus
    ``constants.full_modulus``.  The default step is ``modulus / ((1 + 2ε) L)²``.
    """
    grad = gradient or problem.full_grad
    if grad is None:
        raise ValueError("compute_saddle needs the full-objective gradient")
    c = problem.constants
    mod = c.full_modulus
    if mod <= 0:
        raise ContractionError(f"full-objective modulus {mod:g} <= 0 and no mono_full given")
    if step is None:
        step = mod / ((1.0 + 2.0 * c.eps) * c.lip_l) ** 2
    return _fixed_point(lambda z: project(box, z - step * grad(z)), _default_z0(box, z0),
                        tolerance, max_iters, "saddle solve")


def compute_smoothed_saddle(problem: MinimaxProblem, box: ProductBox, delta: float,
                            tolerance: float = 1e-12, draws: int = 4096, seed: int = 0,
                            z0=None) -> np.ndarray:
    """Saddle point of the ball-smoothed objective over ``(1 - δ) Z``.

    The smoothed gradient is the average of the full gradient over a fixed,
    antithetic set of ``2 * draws`` product-ball perturbations (common across
    iterations); antithetic pairs make the average exact for quadratic
    objectives.
    """
    if problem.full_grad is None:
        raise ValueError("compute_smoothed_saddle needs the full-objective gradient")
    v1, v2 = sample_product_ball(problem.n_x, problem.n_y, np.random.default_rng(seed), draws)
    shifts = delta * np.concatenate([v1, v2], axis=-1)
    shifts = np.concatenate([shifts, -shifts])

    def grad(z):
        return problem.full_grad(z + shifts).mean(axis=0)

    return compute_saddle(problem, shrink(box, delta), tolerance, z0, gradient=grad)


def perturbation_bound(constants: ProblemConstants, delta: float, z_star) -> float:
    """Upper bound on ``||z* - z*_δ||`` from the smoothing radius.

    ``δ((1 + sqrt(2L)/m)||z*|| + 2L/m)`` with ``m`` the full-objective modulus.
    """
    m = constants.full_modulus
    if m <= 0:
        raise ContractionError(f"full-objective modulus {m:g} <= 0 and no mono_full given")
    L = constants.lip_l
    return delta * ((1.0 + math.sqrt(2.0 * L) / m) * float(np.linalg.norm(_as_array(z_star)))
                    + 2.0 * L / m)


def sepd_rate_constant(constants: ProblemConstants, ell: float, e0_sq: float, kappa: float,
                       nu_bar: float, theta: float) -> float:
    """``ζ`` in ``E||z_t - z̄||² <= ζ/(κ + t)`` for the polynomial SEPD schedule."""
    mod = constants.gamma - constants.eps * constants.lip_l
    return max(kappa * e0_sq,
               ell ** 2 * nu_bar ** 2 * 2.0 ** (1 + 2 * theta) / (2.0 * mod * ell - 1.0))


def dfo_rate_constant(constants: ProblemConstants, ell: float, e0_sq: float, kappa: float,
                      payoff_bound: float, n_x: int, n_y: int, delta: float) -> float:
    """``ζ`` in ``E||z_t - z*_δ||² <= ζ/(κ + t)`` for the zeroth-order method."""
    mod = constants.full_modulus
    return max(kappa * e0_sq,
               payoff_bound ** 2 * (n_x ** 2 + n_y ** 2) * ell ** 2
               / (delta ** 2 * (2.0 * mod * ell - 1.0)))


def estimate_payoff_bound(problem: MinimaxProblem, box: ProductBox, count: int,
                          rng: np.random.Generator) -> float:
    """Largest ``|φ(z, w)|`` over ``count`` draws with ``z`` uniform in ``box``, ``w ~ D(z)``."""
    z = box.sample_uniform(rng, count)
    w = problem.dist_map.transform(z, problem.dist_map.base(rng, (count,)))
    return float(np.max(np.abs(problem.payoff(z, w))))


def distance_bound_rhs(constants: ProblemConstants, box: ProductBox) -> float:
    return constants.ratio * diameter(box)
