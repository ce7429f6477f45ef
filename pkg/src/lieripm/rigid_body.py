"""Lie group variational integrator (LGVI) for a rigid body on SO(3) x R^3.

State at step k is ``(R_k, p_k, F_k, v_k)`` with ``R_{k+1} = R_k F_k`` and
``p_{k+1} = p_k + v_k dt``.  The rotational update is implicit:

    F_{k+1} J - J F_{k+1}^T = J F_k - F_k^T J + hat(tau) dt^2

where ``J`` is the nonstandard inertia.  Torques are expressed in the body
frame at step ``k + 1``.
"""

from dataclasses import dataclass, field

import numpy as np

from .lie import exp_so3, hat, log_so3, orthonormality_defect, project_to_so3

E_Z = np.array([0.0, 0.0, 1.0])
GRAVITY = np.array([0.0, 0.0, -9.81])


class ConvergenceError(RuntimeError):
    """Implicit step failed to converge."""

    def __init__(self, message, residual=float("nan"), step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


def nonstandard_inertia(I_std):
    """Nonstandard inertia ``J`` with ``I_std = trace(J) I - J``."""
    I_std = np.asarray(I_std, dtype=float)
    if np.linalg.norm(I_std - I_std.T) > 1e-12 * max(1.0, np.linalg.norm(I_std)):
        raise ValueError("inertia must be symmetric")
    return 0.5 * np.trace(I_std) * np.eye(3) - I_std


@dataclass
class BodyParams:
    m: float = 1.0
    I_std: np.ndarray = field(default_factory=lambda: np.eye(3))
    g: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        self.I_std = np.asarray(self.I_std, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        if self.m <= 0:
            raise ValueError("mass must be positive")
        if np.linalg.eigvalsh(0.5 * (self.I_std + self.I_std.T)).min() <= 0:
            raise ValueError("inertia must be positive definite")
        self.I_ns = nonstandard_inertia(self.I_std)


@dataclass
class BodyState:
    R: np.ndarray
    p: np.ndarray
    F: np.ndarray
    v: np.ndarray

    def angular_velocity(self, dt):
        """Mid-point body angular velocity ``vee(F - I) / dt`` (skew part)."""
        D = self.F - np.eye(3)
        return 0.5 * np.array([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]]) / dt


@dataclass
class ControlInput:
    tau: np.ndarray = field(default_factory=lambda: np.zeros(3))
    u_z: float = 0.0


@dataclass
class Trajectory:
    """States ``(N+1, n_bodies)`` stored as stacked arrays, inputs ``(N, n_inputs)``."""

    dt: float
    R: np.ndarray
    p: np.ndarray
    F: np.ndarray
    v: np.ndarray
    inputs: np.ndarray

    @property
    def N(self):
        return self.R.shape[0] - 1

    @property
    def n_bodies(self):
        return self.R.shape[1]

    def state(self, k, b=0):
        return BodyState(self.R[k, b], self.p[k, b], self.F[k, b], self.v[k, b])


def rot_dyn_residual(F_k, F_next, tau, dt, I_ns):
    """Residual of the discrete rotational dynamics (zero on solutions)."""
    J = I_ns
    M = (F_next @ J - J @ F_next.T) - (J @ F_k - F_k.T @ J)
    return np.array([M[2, 1], M[0, 2], M[1, 0]]) - np.asarray(tau, dtype=float) * dt * dt


def rot_dyn_jacobian_next(F_next, I_ns):
    """d residual / d xi for ``F_next exp(xi)``: columns ``vee(F hat(e) J + J hat(e) F^T)``."""
    cols = []
    for e in np.eye(3):
        M = F_next @ hat(e) @ I_ns
        S = M - M.T
        cols.append([S[2, 1], S[0, 2], S[1, 0]])
    return np.array(cols).T


def body_momentum(F, dt, I_ns):
    """Body angular momentum ``vee(F J - J F^T) / dt`` carried by the step ``F``."""
    M = F @ I_ns - I_ns @ F.T
    return np.array([M[2, 1], M[0, 2], M[1, 0]]) / dt


def spatial_angular_momentum(R, F, dt, I_ns):
    """World-frame angular momentum ``R_k vee(F_k J - J F_k^T) / dt``; conserved without torque."""
    return R @ body_momentum(F, dt, I_ns)


def solve_next_F(F_k, tau, dt, I_ns, tol=1e-12, max_iter=50):
    """Solve the implicit rotational update for ``F_{k+1}``.

    Newton iterations on ``delta`` with ``F_{k+1} = F_guess exp(delta)``,
    starting from ``F_guess = F_k``.
    """
    F = np.array(F_k, dtype=float)
    r = rot_dyn_residual(F_k, F, tau, dt, I_ns)
    for _ in range(max_iter):
        res = float(np.linalg.norm(r))
        if res <= tol:
            return F
        Jac = rot_dyn_jacobian_next(F, I_ns)
        F = F @ exp_so3(np.linalg.solve(Jac, -r))
        if orthonormality_defect(F) > 1e-10:
            F = project_to_so3(F)
        r = rot_dyn_residual(F_k, F, tau, dt, I_ns)
    res = float(np.linalg.norm(r))
    if res <= tol:
        return F
    raise ConvergenceError(f"implicit rotation update did not converge (|r| = {res:.3e})", res)


def trans_dyn_step(v_k, params, dt, thrust_world=np.zeros(3)):
    """``v_{k+1} = v_k + g dt + thrust dt / m``."""
    return np.asarray(v_k, dtype=float) + params.g * dt + np.asarray(thrust_world, dtype=float) * dt / params.m


def trans_dyn_residual(v_k, v_next, params, dt, thrust_world=np.zeros(3)):
    m = params.m
    return m * np.asarray(v_next) - m * np.asarray(v_k) - m * params.g * dt - np.asarray(thrust_world) * dt


def kin_residuals(state_k, state_next, dt):
    """``(log(R_{k+1}^T R_k F_k), p_{k+1} - p_k - v_k dt)``."""
    r_rot = log_so3(state_next.R.T @ state_k.R @ state_k.F)
    r_pos = state_next.p - state_k.p - state_k.v * dt
    return r_rot, r_pos


def _as_input(u):
    if u is None:
        return np.zeros(3), 0.0
    if isinstance(u, ControlInput):
        return np.asarray(u.tau, dtype=float), float(u.u_z)
    u = np.asarray(u, dtype=float)
    return u[:3], float(u[3]) if len(u) > 3 else 0.0


def simulate(initial, inputs, dt, N, params, tol=1e-12):
    """Forward-simulate one body for ``N`` steps.

    ``inputs`` is a sequence of ``ControlInput`` (or ``[tau_x, tau_y, tau_z, u_z]``
    arrays, or ``None`` for no input) of length ``N``; ``None`` for the
    whole argument means torque- and thrust-free motion.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    R = np.empty((N + 1, 1, 3, 3))
    p = np.empty((N + 1, 1, 3))
    F = np.empty((N + 1, 1, 3, 3))
    v = np.empty((N + 1, 1, 3))
    U = np.zeros((N, 4))
    R[0, 0], p[0, 0], F[0, 0], v[0, 0] = initial.R, initial.p, initial.F, initial.v
    for k in range(N):
        tau, u_z = _as_input(None if inputs is None else inputs[k])
        U[k, :3], U[k, 3] = tau, u_z
        Rn = R[k, 0] @ F[k, 0]
        if orthonormality_defect(Rn) > 1e-10:
            Rn = project_to_so3(Rn)
        R[k + 1, 0] = Rn
        p[k + 1, 0] = p[k, 0] + v[k, 0] * dt
        try:
            F[k + 1, 0] = solve_next_F(F[k, 0], tau, dt, params.I_ns, tol=tol)
        except ConvergenceError as exc:
            raise ConvergenceError(f"step {k}: {exc}", exc.residual, step=k) from exc
        v[k + 1, 0] = trans_dyn_step(v[k, 0], params, dt, Rn @ E_Z * u_z)
    return Trajectory(dt=dt, R=R, p=p, F=F, v=v, inputs=U)
