"""Problem generators: drone docking (three variants), kinematic chains and a 7-link arm."""

import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .constraints import (AxisBlock, BoxBlock, InitialRotBlock, InitialVecBlock,
                          JointWrenchBlock, ObstacleBlock, PivotBlock, RotDynBlock,
                          RotKinBlock, TransDynBlock, TransKinBlock)
from .costs import CostSpec, input_cost_block, state_cost_blocks
from .lie import exp_so3, log_so3
from .nlp import NLPProblem, VariableLayout
from .rigid_body import BodyParams, Trajectory
from .ripm import SolverError, SolverOptions, solve

E_Z = np.array([0.0, 0.0, 1.0])


@dataclass
class ScenarioConfig:
    """Scenario parameters; diagonal weights are given as scalars times identity."""

    scenario: str = "docking"  # docking | docking-constrained | cluttered | manipulator
    seed: int = 0
    N: int = 40
    dt: float = 0.05
    m: float = 1.0
    inertia: tuple = (0.02, 0.02, 0.04)  # diagonal of the standard inertia
    g: float = 9.81
    tau_lim: float = 1.0
    u_z_lim_factor: float = 4.0  # u_z in [0, factor * m * |g|]
    box: float = 2.0  # initial positions uniform in [-box, box]^3
    angle_min: float = 0.0
    angle_max: float = math.pi
    obstacles: tuple = ()  # ((x, y, radius), ...)
    w_R: float = 1.0
    w_p: float = 1.0
    w_F: float = 1.0
    w_v: float = 1.0
    w_u: float = 1e-4
    terminal_scale: float = 1.0
    robot_file: str = None
    q_goal: tuple = (0.8, 0.6, -0.4, 0.9, 0.3, -0.5, 0.2)

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("horizon N must be at least 2")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        vals = [self.m, self.g, self.tau_lim, self.box, self.w_u, *self.inertia]
        if not all(np.isfinite(vals)):
            raise ValueError("scenario parameters must be finite")
        self.obstacles = tuple(tuple(float(v) for v in o) for o in self.obstacles)

    def body(self):
        return BodyParams(m=self.m, I_std=np.diag(self.inertia), g=np.array([0.0, 0.0, -self.g]))

    def cost_spec(self):
        return CostSpec(W_R=self.w_R * np.eye(3), W_p=self.w_p * np.eye(3),
                        W_F=self.w_F * np.eye(3), W_v=self.w_v * np.eye(3),
                        w_u=self.w_u, terminal_scale=self.terminal_scale)


CLUTTERED_OBSTACLES = ((1.0, 0.0, 0.5), (-1.0, 0.8, 0.5), (0.0, -1.2, 0.5))


def sample_initial_pose(rng, cfg):
    """Position uniform in the box; rotation axis uniform on the sphere, angle uniform in the interval."""
    p = rng.uniform(-cfg.box, cfg.box, size=3)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(cfg.angle_min, cfg.angle_max)
    return exp_so3(angle * axis), p


def geodesic_init(x_init, x_goal, N, dt=1.0):
    """Interpolate rotations along the geodesic and positions linearly.

    ``x_init`` / ``x_goal`` are ``(R, p)`` pairs.  ``F_k = R_k^T R_{k+1}`` and
    ``v_k = (p_{k+1} - p_k) / dt`` for ``k < N``; the final discrete twist
    repeats the previous one (constant-rate motion along the geodesic).
    """
    R0, p0 = np.asarray(x_init[0], float), np.asarray(x_init[1], float)
    R1, p1 = np.asarray(x_goal[0], float), np.asarray(x_goal[1], float)
    phi = log_so3(R0.T @ R1)
    R = np.empty((N + 1, 1, 3, 3))
    p = np.empty((N + 1, 1, 3))
    for k in range(N + 1):
        R[k, 0] = R0 @ exp_so3((k / N) * phi)
        p[k, 0] = p0 + (k / N) * (p1 - p0)
    F = np.tile(np.eye(3), (N + 1, 1, 1, 1))
    v = np.zeros((N + 1, 1, 3))
    for k in range(N):
        F[k, 0] = R[k, 0].T @ R[k + 1, 0]
        v[k, 0] = (p[k + 1, 0] - p[k, 0]) / dt
    F[N], v[N] = F[N - 1], v[N - 1]
    return Trajectory(dt=dt, R=R, p=p, F=F, v=v, inputs=np.zeros((N, 0)))


def drone_inverse_dynamics(traj, body):
    """Inputs that best explain a state trajectory: exact torques, least-squares thrust.

    The rotational dynamics are solved for the body torque; the thrust is the
    projection of the required force onto the body ``z`` axis at ``k + 1``.
    """
    N, dt = traj.N, traj.dt
    U = np.zeros((N, 4))
    J = body.I_ns
    for k in range(N):
        F0, F1 = traj.F[k, 0], traj.F[k + 1, 0]
        M = (F1 @ J - J @ F1.T) - (J @ F0 - F0.T @ J)
        U[k, :3] = np.array([M[2, 1], M[0, 2], M[1, 0]]) / dt ** 2
        force = body.m * (traj.v[k + 1, 0] - traj.v[k, 0]) / dt - body.m * body.g
        U[k, 3] = traj.R[k + 1, 0][:, 2] @ force
    return U


# --------------------------------------------------------------- drone


@dataclass
class DroneProblem:
    config: ScenarioConfig
    problem: NLPProblem
    x0: object
    slots: dict  # name -> array of slot ids per step
    init: Trajectory

    def trajectory(self, x):
        """Read a solver point back into a :class:`Trajectory`."""
        N = self.config.N
        R = np.array([x[s] for s in self.slots["R"]])[:, None]
        p = np.array([x[s] for s in self.slots["p"]])[:, None]
        F = np.array([x[s] for s in self.slots["F"]])[:, None]
        v = np.array([x[s] for s in self.slots["v"]])[:, None]
        U = np.array([np.concatenate([x[self.slots["tau"][k]], x[self.slots["u_z"][k]]]) for k in range(N)])
        return Trajectory(dt=self.config.dt, R=R, p=p, F=F, v=v, inputs=U)


def drone_docking(cfg, initial=None):
    """Docking NLP from a sampled (or given ``(R0, p0)``) initial pose to the identity at the origin.

    Variables per step are ``(R, p, F, v)`` followed, for ``k < N``, by the
    body torque and thrust.  Equalities: initial pose, then kinematics and
    dynamics per step.  ``docking-constrained`` adds input boxes;
    ``cluttered`` adds input boxes and cylinder obstacles at ``k = 1..N``.
    """
    if cfg.scenario not in ("docking", "docking-constrained", "cluttered"):
        raise ValueError(f"not a drone scenario: {cfg.scenario}")
    body = cfg.body()
    spec = cfg.cost_spec()
    N, dt = cfg.N, cfg.dt
    if initial is None:
        initial = sample_initial_pose(np.random.default_rng(cfg.seed), cfg)
    hover = body.m * float(np.linalg.norm(body.g))

    L = VariableLayout()
    slots = {k: [] for k in ("R", "p", "F", "v", "tau", "u_z")}
    for k in range(N + 1):
        slots["R"].append(L.add_rot("R", k, (0,)))
        slots["p"].append(L.add_vec("p", 3, k, (0,)))
        slots["F"].append(L.add_rot("F", k, (0,)))
        slots["v"].append(L.add_vec("v", 3, k, (0,)))
        if k < N:
            slots["tau"].append(L.add_vec("tau", 3, k, (0,)))
            slots["u_z"].append(L.add_vec("u_z", 1, k, (0,)))
    slots = {k: np.array(v) for k, v in slots.items()}
    P = NLPProblem(L)
    sR, sp_, sF, sv, st, su = (slots[k] for k in ("R", "p", "F", "v", "tau", "u_z"))
    P.add_eq(InitialRotBlock((sR[0],), initial[0]))
    P.add_eq(InitialVecBlock((sp_[0],), initial[1]))
    for k in range(N):
        P.add_eq(RotKinBlock((sR[k + 1], sR[k], sF[k])))
        P.add_eq(TransKinBlock((sp_[k + 1], sp_[k], sv[k]), dt))
        P.add_eq(RotDynBlock((sF[k], sF[k + 1], st[k]), body.I_ns, dt))
        P.add_eq(TransDynBlock((sv[k], sv[k + 1], sR[k + 1], su[k]), body.m, body.g, dt))
    for k in range(N + 1):
        scale = spec.terminal_scale if k == N else 1.0
        for b in state_cost_blocks((sR[k], sp_[k], sF[k], sv[k]), spec, scale):
            P.add_cost(b)
        if k < N:
            P.add_cost(input_cost_block(st[k], np.zeros(3), spec.w_u))
            P.add_cost(input_cost_block(su[k], [hover], spec.w_u))
    if cfg.scenario in ("docking-constrained", "cluttered"):
        lim = cfg.tau_lim
        for k in range(N):
            P.add_ineq(BoxBlock((st[k],), [-lim] * 3, [lim] * 3))
            P.add_ineq(BoxBlock((su[k],), [0.0], [cfg.u_z_lim_factor * hover]))
    obstacles = cfg.obstacles or (CLUTTERED_OBSTACLES if cfg.scenario == "cluttered" else ())
    for cx, cy, r in obstacles:
        for k in range(1, N + 1):
            P.add_ineq(ObstacleBlock((sp_[k],), (cx, cy), r))

    init = geodesic_init(initial, (spec.R_d, spec.p_d), N, dt)
    init.inputs = drone_inverse_dynamics(init, body)
    x0 = L.zero_point()
    for k in range(N + 1):
        x0[sR[k]], x0[sp_[k]] = init.R[k, 0], init.p[k, 0]
        x0[sF[k]], x0[sv[k]] = init.F[k, 0], init.v[k, 0]
        if k < N:
            x0[st[k]], x0[su[k]] = init.inputs[k, :3], init.inputs[k, 3:]
    return DroneProblem(cfg, P, x0, slots, init)


# ------------------------------------------------------------ multibody


@dataclass
class LinkSpec:
    m: float
    I_std: np.ndarray


@dataclass
class JointSpec:
    """Revolute joint: pivot ``R_a r_a + p_a = R_b r_b + p_b`` plus axis alignment.

    ``parent = -1`` attaches the child to a fixed world anchor at ``r_a``.
    ``axis`` is expressed in the child frame (equal to the parent frame in
    the zero configuration).
    """

    parent: int
    child: int
    r_a: np.ndarray
    r_b: np.ndarray
    axis: np.ndarray = field(default_factory=lambda: E_Z.copy())

    def __post_init__(self):
        if self.parent == self.child:
            raise ValueError("joint must connect two distinct bodies")
        self.r_a = np.asarray(self.r_a, dtype=float)
        self.r_b = np.asarray(self.r_b, dtype=float)
        self.axis = np.asarray(self.axis, dtype=float) / np.linalg.norm(self.axis)


@dataclass
class RobotModel:
    links: list
    joints: list

    def __post_init__(self):
        nb = len(self.links)
        for j in self.joints:
            if not (-1 <= j.parent < nb and 0 <= j.child < nb):
                raise ValueError("joint body index out of range")

    @property
    def n_bodies(self):
        return len(self.links)


def rod_link(length=0.3, radius=0.04, m=1.0):
    """Uniform solid cylinder along its local z axis."""
    ixx = m * (3 * radius ** 2 + length ** 2) / 12.0
    return LinkSpec(m=m, I_std=np.diag([ixx, ixx, 0.5 * m * radius ** 2]))


def serial_chain(depth, length=0.3, axes=None):
    """Single-branch chain of rods stacked along z, base pivot at the world origin."""
    axes = axes or [E_Z if i % 2 == 0 else np.array([0.0, 1.0, 0.0]) for i in range(depth)]
    links = [rod_link(length) for _ in range(depth)]
    half = np.array([0.0, 0.0, 0.5 * length])
    joints = [JointSpec(-1, 0, np.zeros(3), -half, axes[0])]
    joints += [JointSpec(i - 1, i, half, -half, axes[i]) for i in range(1, depth)]
    return RobotModel(links, joints)


def default_robot():
    """Seven unit-mass rods with joint axes alternating z, y, z, y, z, y, z."""
    return serial_chain(7)


def load_robot(path):
    """Parse a robot parameter file.

    One ``link`` line per body, in order::

        link  parent  mass  Ixx Iyy Izz Ixy Ixz Iyz  ra_x ra_y ra_z  rb_x rb_y rb_z  ax_x ax_y ax_z

    ``parent`` is ``-1`` for the world anchor (then ``r_a`` is the anchor
    position); blank lines and ``#`` comments are ignored.
    """
    links, joints = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if tok[0] != "link" or len(tok) != 18:
                raise ValueError(f"{path}:{lineno}: expected 'link' followed by 17 numbers")
            vals = [float(t) for t in tok[1:]]
            parent, m = int(vals[0]), vals[1]
            ixx, iyy, izz, ixy, ixz, iyz = vals[2:8]
            I_std = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
            child = len(links)
            links.append(LinkSpec(m, I_std))
            joints.append(JointSpec(parent, child, vals[8:11], vals[11:14], vals[14:17]))
    return RobotModel(links, joints)


def forward_kinematics(model, q):
    """Link poses for joint angles ``q`` (one per joint, joints listed parent-first)."""
    nb = model.n_bodies
    R = [None] * nb
    p = [None] * nb
    for j, qj in zip(model.joints, q):
        if j.parent < 0:
            Ra, pa = np.eye(3), np.zeros(3)
        else:
            Ra, pa = R[j.parent], p[j.parent]
            if Ra is None:
                raise ValueError("joints must be listed parent-first")
        Rb = Ra @ exp_so3(qj * j.axis)
        R[j.child] = Rb
        p[j.child] = Ra @ j.r_a + pa - Rb @ j.r_b
    return np.array(R), np.array(p)


@dataclass
class MultibodyProblem:
    model: RobotModel
    problem: NLPProblem
    x0: object
    slots: dict  # name -> (N+1, nb) or (N, nj) slot id arrays
    dyn_rows: np.ndarray  # (N, nb, 12) equality rows of each body's dynamics (rot 3 + trans 3) and kinematics
    N: int
    dt: float

    @property
    def couplings(self):
        return [(j.parent, j.child) for j in self.model.joints if j.parent >= 0]


def build_multibody(model, N, dt, g=9.81, q_init=None, q_goal=None, obstacles=(), spec=None):
    """Maximal-coordinate NLP for a jointed system.

    Per body and step: ``(R, p, F, v)``; per joint and step ``k < N``: five
    constraint multipliers and one joint torque.  Joint constraints hold at
    ``k = 1..N``; their wrenches enter the dynamics rows between ``k`` and
    ``k + 1``.  The initial configuration fixes every link pose.  Costs pull
    every link to the goal configuration at rest; joint torques and the last
    step's multipliers (otherwise undetermined) are lightly regularized.
    """
    nb, nj = model.n_bodies, len(model.joints)
    q_init = np.zeros(nj) if q_init is None else np.asarray(q_init, float)
    q_goal = np.zeros(nj) if q_goal is None else np.asarray(q_goal, float)
    spec = CostSpec() if spec is None else spec
    grav = np.array([0.0, 0.0, -g])
    params = [BodyParams(l.m, l.I_std, grav) for l in model.links]

    L = VariableLayout()
    S = {k: np.zeros((N + 1, nb), int) for k in ("R", "p", "F", "v")}
    S["lam"] = np.zeros((N, nj), int)
    S["tau"] = np.zeros((N, nj), int)
    for k in range(N + 1):
        for b in range(nb):
            S["R"][k, b] = L.add_rot("R", k, (b,))
            S["p"][k, b] = L.add_vec("p", 3, k, (b,))
            S["F"][k, b] = L.add_rot("F", k, (b,))
            S["v"][k, b] = L.add_vec("v", 3, k, (b,))
        if k < N:
            for i, j in enumerate(model.joints):
                bodies = (j.child,) if j.parent < 0 else (j.parent, j.child)
                S["lam"][k, i] = L.add_vec(f"lam{i}", 5, k, bodies)
                S["tau"][k, i] = L.add_vec(f"tau{i}", 1, k, bodies)
    P = NLPProblem(L)
    R_init, p_init = forward_kinematics(model, q_init)
    R_goal, p_goal = forward_kinematics(model, q_goal)
    for b in range(nb):
        P.add_eq(InitialRotBlock((S["R"][0, b],), R_init[b]))
        P.add_eq(InitialVecBlock((S["p"][0, b],), p_init[b]))
    dyn_rows = np.zeros((N, nb, 6), int)
    for k in range(N):
        for b in range(nb):
            P.add_eq(RotKinBlock((S["R"][k + 1, b], S["R"][k, b], S["F"][k, b])))
            P.add_eq(TransKinBlock((S["p"][k + 1, b], S["p"][k, b], S["v"][k, b]), dt))
            rr = P.add_eq(RotDynBlock((S["F"][k, b], S["F"][k + 1, b]), params[b].I_ns, dt, with_torque=False))
            tr = P.add_eq(TransDynBlock((S["v"][k, b], S["v"][k + 1, b]), params[b].m, grav, dt, with_thrust=False))
            dyn_rows[k, b] = np.concatenate([rr, tr])
        for i, j in enumerate(model.joints):
            c = j.child
            if j.parent < 0:
                blk = JointWrenchBlock((S["R"][k + 1, c], S["lam"][k, i], S["tau"][k, i]),
                                       j.r_a, j.r_b, j.axis, dt, fixed=np.eye(3))
                rows = dyn_rows[k, c]
            else:
                a = j.parent
                blk = JointWrenchBlock((S["R"][k + 1, a], S["R"][k + 1, c], S["lam"][k, i], S["tau"][k, i]),
                                       j.r_a, j.r_b, j.axis, dt)
                rows = np.concatenate([dyn_rows[k, a], dyn_rows[k, c]])
            P.add_eq(blk, rows=rows)
    for k in range(1, N + 1):
        for j in model.joints:
            c = j.child
            if j.parent < 0:
                P.add_eq(PivotBlock((S["R"][k, c], S["p"][k, c]), np.zeros(3), j.r_b,
                                    fixed=(np.eye(3), j.r_a)))
                P.add_eq(AxisBlock((S["R"][k, c],), j.axis, fixed=np.eye(3)))
            else:
                a = j.parent
                P.add_eq(PivotBlock((S["R"][k, a], S["p"][k, a], S["R"][k, c], S["p"][k, c]), j.r_a, j.r_b))
                P.add_eq(AxisBlock((S["R"][k, a], S["R"][k, c]), j.axis))
        for b in range(nb):
            for cx, cy, r in obstacles:
                P.add_ineq(ObstacleBlock((S["p"][k, b],), (cx, cy), r))
    for k in range(N + 1):
        scale = spec.terminal_scale if k == N else 1.0
        for b in range(nb):
            target = replace(spec, R_d=R_goal[b], p_d=p_goal[b])
            for blk in state_cost_blocks((S["R"][k, b], S["p"][k, b], S["F"][k, b], S["v"][k, b]), target, scale):
                P.add_cost(blk)
        if k < N:
            for i in range(nj):
                P.add_cost(input_cost_block(S["tau"][k, i], [0.0], spec.w_u))
    for i in range(nj):
        P.add_cost(input_cost_block(S["lam"][N - 1, i], np.zeros(5), spec.w_u))

    x0 = L.zero_point()
    for k in range(N + 1):
        R_k, p_k = forward_kinematics(model, q_init + (k / N) * (q_goal - q_init))
        R_n, p_n = forward_kinematics(model, q_init + (min(k + 1, N) / N) * (q_goal - q_init))
        for b in range(nb):
            x0[S["R"][k, b]], x0[S["p"][k, b]] = R_k[b], p_k[b]
            if k < N:
                x0[S["F"][k, b]] = R_k[b].T @ R_n[b]
                x0[S["v"][k, b]] = (p_n[b] - p_k[b]) / dt
    return MultibodyProblem(model, P, x0, S, dyn_rows, N, dt)


def inverse_dynamics_warm_start(mb, x=None):
    """Per step, least-squares joint torques and multipliers minimizing the dynamics residual.

    Returns the updated point; falls back to zero multipliers (with a
    warning) for steps whose system is rank deficient.
    """
    x = (mb.x0 if x is None else x).copy()
    P = mb.problem
    ev = P.evaluate(x, order=1)
    JE = ev.JE.tocsr()
    lay = P.layout
    for k in range(mb.N):
        rows = mb.dyn_rows[k].ravel()
        cols = np.concatenate([lay.indices(s) for s in np.concatenate([mb.slots["lam"][k], mb.slots["tau"][k]])])
        A = JE[rows][:, cols].toarray()
        # dynamics rows are affine in (lambda, tau); remove the current input contribution
        u_now = np.concatenate([x[s] for s in np.concatenate([mb.slots["lam"][k], mb.slots["tau"][k]])])
        r0 = ev.h[rows] - A @ u_now
        sol, _, rank, _ = np.linalg.lstsq(A, -r0, rcond=None)
        if rank < A.shape[1]:
            warnings.warn(f"warm start step {k}: rank-deficient system ({rank} < {A.shape[1]}); using zero multipliers")
            sol = np.zeros(A.shape[1])
        off = 0
        for s in np.concatenate([mb.slots["lam"][k], mb.slots["tau"][k]]):
            d = lay.slots[s].dim
            x[s] = sol[off:off + d]
            off += d
    return x


def manipulator(cfg, warm_start=True):
    """Seven-link arm moving from the zero configuration to ``cfg.q_goal`` around CoM obstacles."""
    model = load_robot(cfg.robot_file) if cfg.robot_file else default_robot()
    q_goal = np.asarray(cfg.q_goal, float)[:len(model.joints)]
    mb = build_multibody(model, cfg.N, cfg.dt, cfg.g, q_goal=q_goal, obstacles=cfg.obstacles,
                         spec=cfg.cost_spec())
    if warm_start:
        mb.x0 = inverse_dynamics_warm_start(mb)
    return mb


# ------------------------------------------------------------ benchmarks


@dataclass
class BenchRecord:
    depth: int
    t_residual: float
    t_gradient: float
    t_hessian: float
    nnz_jacobian: int


def chain_benchmark(depth_list, repeats=100, N=4, dt=0.05):
    """Mean evaluation time of residuals, first- and second-order derivatives of serial chains.

    Each depth builds the maximal-coordinate chain NLP (pivot and axis joint
    per link) over ``N`` steps and times ``repeats`` evaluations at
    increasing derivative order; the Hessian timing includes assembling the
    Lagrangian Hessian.
    """
    out = []
    for depth in depth_list:
        if depth < 1:
            raise ValueError("depth must be at least 1")
        mb = build_multibody(serial_chain(depth), N, dt, q_goal=np.full(depth, 0.3))
        P, x = mb.problem, mb.x0
        P.compile()
        y = np.ones(P.l)
        z = np.ones(P.m)
        times = []
        for order in range(3):
            P.evaluate(x, order)  # warm-up
            t0 = time.perf_counter()
            for _ in range(repeats):
                ev = P.evaluate(x, order)
                if order == 2:
                    P.lagrangian_hessian(ev, y, z)
            times.append((time.perf_counter() - t0) / repeats)
        nnz = P.evaluate(x, 1).JE.nnz
        out.append(BenchRecord(depth, times[0], times[1], times[2], nnz))
    return out


def loglog_slope(x, t):
    A = np.vstack([np.log(x), np.ones(len(x))]).T
    return float(np.linalg.lstsq(A, np.log(t), rcond=None)[0][0])


# ------------------------------------------------------------- sweeps


@dataclass
class SeedRecord:
    seed: int
    status: str
    iters: int
    E_0_final: float
    cost: float
    t_per_iter_solver: float
    t_per_iter_total: float
    E0_history: list = field(default_factory=list)
    min_s: float = math.inf
    min_z: float = math.inf
    min_ftb_margin: float = math.inf
    min_mu: float = math.inf


@dataclass
class SweepSummary:
    records: list
    fraction: float
    median_iters: float
    mean_iters: float
    t_per_iter_solver: float
    t_per_iter_total: float


def run_seed(cfg, seed, options):
    prob = drone_docking(replace(cfg, seed=seed))
    try:
        res = solve(prob.problem, prob.x0, options)
    except SolverError as exc:
        return SeedRecord(seed, f"error: {exc}", exc.iteration, math.nan, math.nan, math.nan, math.nan)
    it = max(res.iterations, 1)
    recs = res.trace.records
    return SeedRecord(
        seed=seed, status=res.status, iters=res.iterations, E_0_final=res.E_0, cost=res.cost,
        t_per_iter_solver=(res.t_total - res.t_eval) / it, t_per_iter_total=res.t_total / it,
        E0_history=res.trace.E0_history(),
        min_s=min([r.min_s for r in recs], default=math.inf),
        min_z=min([r.min_z for r in recs], default=math.inf),
        min_ftb_margin=min([r.ftb_margin for r in recs], default=math.inf),
        min_mu=min([r.mu for r in recs], default=options.mu0))


def _run_seed_args(args):
    return run_seed(*args)


def summarize(records):
    conv = [r for r in records if r.status == "converged"]
    iters = [r.iters for r in conv]
    done = [r for r in records if np.isfinite(r.t_per_iter_total)]
    return SweepSummary(
        records=records,
        fraction=len(conv) / len(records) if records else 0.0,
        median_iters=float(np.median(iters)) if iters else math.nan,
        mean_iters=float(np.mean(iters)) if iters else math.nan,
        t_per_iter_solver=float(np.mean([r.t_per_iter_solver for r in done])) if done else math.nan,
        t_per_iter_total=float(np.mean([r.t_per_iter_total for r in done])) if done else math.nan)


def convergence_sweep(cfg, seeds, tol=1e-9, iter_budget=100, workers=1, options=None):
    """Solve the drone scenario for each seed; aggregate convergence statistics."""
    options = replace(options or SolverOptions(), eps_tol=tol, N_max=iter_budget)
    jobs = [(cfg, int(s), options) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = list(ex.map(_run_seed_args, jobs))
    else:
        records = [run_seed(*j) for j in jobs]
    return summarize(records)


def superlinear_tail(E0_history, order=1.3, count=3):
    """``E_{k+1} <= E_k**order`` over the last ``count`` values of the history."""
    tail = E0_history[-count:]
    if len(tail) < count:
        return False
    return all(b <= a ** order for a, b in zip(tail[:-1], tail[1:]))
