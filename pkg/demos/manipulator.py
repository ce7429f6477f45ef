"""
A seven-link arm in maximal coordinates
=======================================

Every link carries its own pose and twist; revolute joints appear as pivot
and axis equality constraints whose multipliers are the joint reaction
wrenches.  The arm swings from the zero configuration toward a goal
configuration while keeping link centres of mass out of a vertical
cylinder.
"""

import numpy as np

from lieripm.lie import log_so3
from lieripm.ripm import SolverOptions, solve
from lieripm.scenarios import ScenarioConfig, forward_kinematics, manipulator

# one second of motion; the terminal pose is weighted 20 times a running stage
cfg = ScenarioConfig(scenario="manipulator", N=20, dt=0.05, terminal_scale=20.0,
                     obstacles=((0.3, 0.2, 0.1),))
mb = manipulator(cfg)
P = mb.problem
print(f"{mb.model.n_bodies} links, {P.layout.n} tangent variables, {P.l} equalities, {P.m} inequalities")

res = solve(P, mb.x0, SolverOptions(eps_tol=1e-9, N_max=100))
for r in res.trace:
    print(f"iter {r.iter:3d}  E_0 {r.E_0:9.2e}  mu {r.mu:9.2e}  cost {r.cost:9.4f}  alpha {r.alpha:8.2e}")
print(f"status: {res.status}")

# %%
# Joint constraints hold at the solution to solver precision, and the last
# link poses can be compared with forward kinematics of the goal angles.
x = res.state.x
h = P.evaluate(x, 0).h
print(f"largest equality residual {np.abs(h).max():.2e}")
R_goal, p_goal = forward_kinematics(mb.model, np.asarray(cfg.q_goal))
for b in range(mb.model.n_bodies):
    R, p = x[mb.slots["R"][mb.N, b]], x[mb.slots["p"][mb.N, b]]
    print(f"link {b}: position error {np.linalg.norm(p - p_goal[b]):.3f} m, "
          f"attitude error {np.linalg.norm(log_so3(R_goal[b].T @ R)):.3f} rad")

# %%
# The joint torques found by the solver.
tau = np.array([[x[s][0] for s in row] for row in mb.slots["tau"]])
print("joint torques per step (N m):")
print(np.array2string(tau, precision=3, suppress_small=True))
