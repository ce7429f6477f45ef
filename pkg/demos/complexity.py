"""
How cost grows with bodies and with horizon
===========================================

Maximal coordinates keep every joint constraint local to the two links it
connects, so derivative evaluation grows linearly with the number of links.
Stage-wise coupling keeps the KKT matrix banded in time, so the sparse
factorization grows linearly with the horizon.
"""

import numpy as np

from lieripm.nlp import assemble, solve_newton
from lieripm.ripm import SolverOptions, initial_state
from lieripm.scenarios import ScenarioConfig, chain_benchmark, drone_docking, loglog_slope

depths = [2, 4, 8, 16, 32]
recs = chain_benchmark(depths, repeats=20)
print(f"{'links':>5} {'residual (ms)':>14} {'gradient (ms)':>14} {'hessian (ms)':>13} {'jacobian nnz':>13}")
for r in recs:
    print(f"{r.depth:5d} {1e3 * r.t_residual:14.3f} {1e3 * r.t_gradient:14.3f} {1e3 * r.t_hessian:13.3f} "
          f"{r.nnz_jacobian:13d}")
for name in ("t_residual", "t_gradient", "t_hessian"):
    print(f"log-log slope of {name}: {loglog_slope(depths, [getattr(r, name) for r in recs]):.2f}")

# %%
# Factorization time of the drone Newton system against the horizon length.
rng = np.random.default_rng(0)
print(f"\n{'N':>4} {'unknowns':>9} {'factor (ms)':>12}")
for N in (20, 40, 80, 160):
    d = drone_docking(ScenarioConfig(N=N, seed=3))
    P = d.problem
    ev = P.evaluate(d.x0, 2)
    st = initial_state(P, d.x0, SolverOptions(), ev)
    system = assemble(P, d.x0, rng.normal(size=P.l), st.z, st.s, st.mu, ev)
    t = np.median([solve_newton(system).t_factor for _ in range(15)])
    print(f"{N:4d} {P.n + P.l:9d} {1e3 * t:12.3f}")
