"""
Torque-free tumbling with the Lie group variational integrator
==============================================================

A rigid body with distinct principal inertias tumbles without external
torque.  Its body-frame angular momentum wanders, the spatial momentum does
not, and the attitude stays on SO(3) to rounding error.
"""

import numpy as np

from lieripm.lie import exp_so3, orthonormality_defect, random_rotation
from lieripm.rigid_body import (BodyParams, BodyState, body_momentum, simulate,
                                spatial_angular_momentum)

rng = np.random.default_rng(0)
body = BodyParams(I_std=np.diag([1.0, 2.0, 3.0]), g=np.zeros(3))
dt, steps = 0.01, 1000

# the discrete twist F_0 encodes the initial angular velocity over one step
omega = np.array([1.0, 0.5, 2.0])
start = BodyState(random_rotation(rng), np.zeros(3), exp_so3(dt * omega), np.zeros(3))
traj = simulate(start, None, dt, steps, body, tol=1e-12)

L = np.array([spatial_angular_momentum(traj.R[k, 0], traj.F[k, 0], dt, body.I_ns)
              for k in range(steps + 1)])
B = np.array([body_momentum(traj.F[k, 0], dt, body.I_ns) for k in range(steps + 1)])
defect = np.array([orthonormality_defect(R) for R in traj.R[:, 0]])

print(f"{'step':>6} {'|L - L0| / |L0|':>18} {'|B - B0| / |B0|':>18} {'orth defect':>12}")
for k in range(0, steps + 1, 100):
    dL = np.linalg.norm(L[k] - L[0]) / np.linalg.norm(L[0])
    dB = np.linalg.norm(B[k] - B[0]) / np.linalg.norm(B[0])
    print(f"{k:6d} {dL:18.3e} {dB:18.3e} {defect[k]:12.3e}")

# %%
# Coarser steps change the trajectory but not the conservation, which stays
# at the level set by the implicit-solve tolerance.
for h in (0.04, 0.02, 0.01):
    s0 = BodyState(start.R, start.p, exp_so3(h * omega), start.v)
    tr = simulate(s0, None, h, int(round(10 / h)), body, tol=1e-12)
    Lh = np.array([spatial_angular_momentum(tr.R[k, 0], tr.F[k, 0], h, body.I_ns) for k in range(tr.N + 1)])
    drift = np.max(np.linalg.norm(Lh - Lh[0], axis=1)) / np.linalg.norm(Lh[0])
    print(f"dt = {h:.2f}: max relative momentum drift over 10 s = {drift:.2e}")
