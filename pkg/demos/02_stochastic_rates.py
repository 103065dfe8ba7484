"""Stochastic primal-dual: decaying versus constant steps.

A polynomial schedule ℓ/(κ+t) drives the mean squared error down like 1/t.
A constant step stalls at a noise floor whose RMS shrinks like 1/sqrt(batch).
"""

import numpy as np

from ddsaddle import (EvParams, References, SolverConfig, StepSchedule, aggregate, build_problem,
                      run_replications)
from ddsaddle.diagnostics import fit_rate

problem = build_problem()
box = EvParams().box
refs = References(np.zeros(6))

cfg = SolverConfig(StepSchedule.polynomial(1.0, 20.0), 10_000, seed=1, record_every=10)
agg = aggregate(run_replications("sepd", problem, box, cfg, 50, refs, z0=np.ones(6)))
t, mse = agg["t"], agg["mean_err_eq_sq"]
for tc in (10, 100, 1000, 10_000):
    i = np.flatnonzero(t == tc)[0]
    print(f"t={tc:6d}  mse={mse[i]:.3e}  mse*(kappa+t)={mse[i] * (20 + tc):.3f}")
late = t >= 100
print(f"log-log slope: {fit_rate(np.column_stack([t[late], mse[late]]), 20.0):.3f}")

for batch in (1, 10, 100):
    cfg = SolverConfig(StepSchedule.constant(0.1), 2000, seed=2, batch=batch)
    traces = run_replications("sepd", problem, box, cfg, 20, refs, z0=np.ones(6))
    tail = np.concatenate([tr.err_eq_sq[tr.t >= 500] for tr in traces])
    print(f"constant step, batch={batch:3d}: plateau RMS {np.sqrt(tail.mean()):.4f}")
