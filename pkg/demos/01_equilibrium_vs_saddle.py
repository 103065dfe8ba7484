"""Equilibrium versus saddle point in the charging market.

Repeated retraining and EPD both land on the equilibrium z̄, which differs
from the saddle point z* of the full objective.  The gap stays inside the
εL/γ · diam(Z) bound.
"""

import numpy as np

from ddsaddle import (EvParams, ProductBox, References, SolverConfig, StepSchedule, build_problem,
                      closed_form_references, repeated_retraining, run_epd)
from ddsaddle.diagnostics import check_distance_bound

params = EvParams(mu_a=1.0)
problem = build_problem(params)
box = params.box
c = problem.constants
print(f"gamma={c.gamma}  L={c.lip_l}  eps={c.eps:.3f}  ratio={c.ratio:.3f}")

refs = closed_form_references(params)
print("z_bar  ", np.round(refs.z_bar, 5))
print("z_star ", np.round(refs.z_star, 5))

seq = np.array(repeated_retraining(problem, box, np.ones(6), outer_iters=15))
steps = np.linalg.norm(np.diff(seq, axis=0), axis=1)
print("retraining step sizes:", np.array2string(steps[:8], precision=2))
print("successive ratios     :", np.array2string(steps[1:8] / steps[:7], precision=3))

tr = run_epd(problem, box, SolverConfig(StepSchedule.constant(0.1), 300),
             References(refs.z_bar, refs.z_star), z0=np.ones(6))
for t in (0, 50, 100, 200, 300):
    print(f"t={t:4d}  |z-z_bar|={np.sqrt(tr.err_eq_sq[t]):.3e}  |z-z*|={np.sqrt(tr.err_saddle_sq[t]):.4f}")

chk = check_distance_bound(problem, box, refs.z_star, refs.z_bar)
print(f"|z* - z_bar| = {chk.lhs:.5f} <= {chk.rhs:.3f}: {chk.ok}")
