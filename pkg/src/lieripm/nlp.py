"""Trajectory NLP assembly on a product of SO(3) and Euclidean factors.

A :class:`VariableLayout` fixes the tangent coordinates; an
:class:`NLPProblem` collects cost, equality (``h(x) = 0``) and inequality
(``g(x) <= 0``) blocks and assembles sparse derivatives.  The Newton system
of the log-barrier KKT conditions is solved after eliminating the slack and
inequality-multiplier directions.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constraints import ROT
from .lie import exp_so3_batch, project_to_so3

PIVOT_TOL = 1e-13  # pivot / column max-norm below which the Newton system counts as singular
SOLVE_TOL = 1e-6  # relative residual after refinement above which the solve is rejected


class InvalidStateError(ValueError):
    """Slack or multiplier vector outside the interior."""


class SingularKKTError(RuntimeError):
    """Factorization of the Newton system failed."""

    def __init__(self, message, pivot=-1):
        super().__init__(message)
        self.pivot = pivot


@dataclass
class Slot:
    name: str
    kind: str  # "rot" or "vec"
    dim: int  # tangent dimension
    offset: int  # first tangent coordinate
    index: int  # row of Point.rots, or first entry of Point.vec
    stage: int = 0
    bodies: tuple = ()


class VariableLayout:
    """Ordered tangent slots; offsets are assigned in insertion order."""

    def __init__(self):
        self.slots = []
        self.n = 0
        self.n_rot = 0
        self.n_vec = 0
        self._lookup = {}

    def _add(self, name, kind, dim, stage, bodies):
        key = (name, stage, tuple(bodies))
        if key in self._lookup:
            raise ValueError(f"duplicate slot {key}")
        if kind == ROT:
            idx = self.n_rot
            self.n_rot += 1
        else:
            idx = self.n_vec
            self.n_vec += dim
        self.slots.append(Slot(name, kind, dim, self.n, idx, stage, tuple(bodies)))
        self.n += dim
        self._lookup[key] = len(self.slots) - 1
        return len(self.slots) - 1

    def add_rot(self, name, stage=0, bodies=()):
        return self._add(name, ROT, 3, stage, bodies)

    def add_vec(self, name, dim, stage=0, bodies=()):
        if dim < 1:
            raise ValueError("dimension must be positive")
        return self._add(name, "vec", int(dim), stage, bodies)

    def find(self, name, stage=0, bodies=()):
        return self._lookup[(name, stage, tuple(bodies))]

    def indices(self, slot_id):
        s = self.slots[slot_id]
        return np.arange(s.offset, s.offset + s.dim)

    def zero_point(self):
        return Point(self, np.tile(np.eye(3), (self.n_rot, 1, 1)), np.zeros(self.n_vec))

    def _retraction_maps(self):
        if not hasattr(self, "_rmaps"):
            rot_t, vec_t, vec_i = [], [], []
            for s in self.slots:
                if s.kind == ROT:
                    rot_t.append(np.arange(s.offset, s.offset + 3))
                else:
                    vec_t.extend(range(s.offset, s.offset + s.dim))
                    vec_i.extend(range(s.index, s.index + s.dim))
            self._rmaps = (np.array(rot_t, dtype=int).reshape(-1, 3),
                           np.array(vec_t, dtype=int), np.array(vec_i, dtype=int))
        return self._rmaps


class Point:
    """Point on the product manifold: stacked rotations plus a flat Euclidean vector."""

    def __init__(self, layout, rots, vec):
        self.layout = layout
        self.rots = np.asarray(rots, dtype=float)
        self.vec = np.asarray(vec, dtype=float)

    def __getitem__(self, slot_id):
        s = self.layout.slots[slot_id]
        if s.kind == ROT:
            return self.rots[s.index]
        return self.vec[s.index:s.index + s.dim]

    def __setitem__(self, slot_id, value):
        s = self.layout.slots[slot_id]
        if s.kind == ROT:
            self.rots[s.index] = value
        else:
            self.vec[s.index:s.index + s.dim] = value

    def copy(self):
        return Point(self.layout, self.rots.copy(), self.vec.copy())


def retract(layout, x, d):
    """``R_x(d)``: rotations right-multiplied by ``exp_so3``, Euclidean slots shifted."""
    d = np.asarray(d, dtype=float)
    if d.shape != (layout.n,):
        raise ValueError(f"direction has shape {d.shape}, expected ({layout.n},)")
    rot_t, vec_t, vec_i = layout._retraction_maps()
    out = x.copy()
    if len(rot_t):
        out.rots = x.rots @ exp_so3_batch(d[rot_t])
        E = np.einsum("nji,njk->nik", out.rots, out.rots) - np.eye(3)
        bad = np.flatnonzero(np.sqrt(np.einsum("nij,nij->n", E, E)) > 1e-10)
        for i in bad:
            out.rots[i] = project_to_so3(out.rots[i])
    out.vec[vec_i] += d[vec_t]
    return out


class _Pattern:
    """Fixed COO triplet list compiled into a CSR structure with duplicate summation."""

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        self.shape = shape
        key = rows * max(shape[1], 1) + cols
        uniq, self.inv = np.unique(key, return_inverse=True)
        self.nnz = len(uniq)
        r = uniq // max(shape[1], 1)
        self.indices = (uniq % max(shape[1], 1)).astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=shape[0]))]).astype(np.int32)

    def build(self, data):
        vals = np.bincount(self.inv, weights=data, minlength=self.nnz) if self.nnz else np.zeros(0)
        return sp.csr_matrix((vals, self.indices, self.indptr), shape=self.shape)


@dataclass
class Evaluation:
    f: float
    h: np.ndarray
    g: np.ndarray
    grad: np.ndarray = None
    JE: sp.csr_matrix = None
    JI: sp.csr_matrix = None
    hess_data: np.ndarray = None  # unweighted Hessian entries, one per triplet

    @property
    def theta(self):
        """Infeasibility ``|h|_1 + sum of positive g``."""
        return float(np.abs(self.h).sum() + np.clip(self.g, 0.0, None).sum())


class NLPProblem:
    """``min f(x)  s.t.  h(x) = 0, g(x) <= 0`` over the manifold described by ``layout``."""

    def __init__(self, layout):
        self.layout = layout
        self.costs = []
        self.eq = []  # (block, rows)
        self.ineq = []
        self.l = 0
        self.m = 0
        self.eq_tags = []  # (stage, bodies) per equality row
        self.ineq_tags = []
        self._compiled = False

    @property
    def n(self):
        return self.layout.n

    def _tag(self, block):
        slots = [self.layout.slots[s] for s in block.slots]
        stage = max(s.stage for s in slots)
        bodies = tuple(sorted({b for s in slots for b in s.bodies}))
        return stage, bodies

    def add_cost(self, block):
        if block.dim != 1:
            raise ValueError("cost blocks must be scalar")
        self.costs.append(block)
        self._compiled = False

    def add_eq(self, block, rows=None):
        """Add an equality block; ``rows`` reuses existing rows (contributions are summed)."""
        if rows is None:
            rows = np.arange(self.l, self.l + block.dim)
            self.l += block.dim
            self.eq_tags.extend([self._tag(block)] * block.dim)
        rows = np.asarray(rows, dtype=int)
        if len(rows) != block.dim or (len(rows) and rows.max() >= self.l):
            raise ValueError("row indices do not match block")
        self.eq.append((block, rows))
        self._compiled = False
        return rows

    def add_ineq(self, block, rows=None):
        if rows is None:
            rows = np.arange(self.m, self.m + block.dim)
            self.m += block.dim
            self.ineq_tags.extend([self._tag(block)] * block.dim)
        rows = np.asarray(rows, dtype=int)
        self.ineq.append((block, rows))
        self._compiled = False
        return rows

    # ------------------------------------------------------------ compile

    def _cols(self, block):
        return np.concatenate([self.layout.indices(s) for s in block.slots])

    def compile(self):
        """Precompute sparsity patterns; called automatically before evaluation."""
        n = self.n
        self._block_cols = {}
        for b in self.costs + [blk for blk, _ in self.eq + self.ineq]:
            self._block_cols[id(b)] = self._cols(b)

        def jac_pattern(items, nrows):
            R, C = [], []
            for blk, rows in items:
                cols = self._block_cols[id(blk)]
                R.append(np.repeat(rows, len(cols)))
                C.append(np.tile(cols, len(rows)))
            R = np.concatenate(R) if R else np.zeros(0, int)
            C = np.concatenate(C) if C else np.zeros(0, int)
            return _Pattern(R, C, (nrows, n))

        self._JE_pat = jac_pattern(self.eq, self.l)
        self._JI_pat = jac_pattern(self.ineq, self.m)
        # Hessian triplets; weight index into w = [1, y, z]
        R, C, Wi = [], [], []
        self._hess_blocks = []
        for blk in self.costs:
            if not blk.linear:
                self._hess_blocks.append((blk, None, 0))
        for blk, rows in self.eq:
            if not blk.linear:
                self._hess_blocks.append((blk, rows, 1))
        for blk, rows in self.ineq:
            if not blk.linear:
                self._hess_blocks.append((blk, rows, 1 + self.l))
        for blk, rows, base in self._hess_blocks:
            cols = self._block_cols[id(blk)]
            k = len(cols)
            rr = np.repeat(cols, k)
            cc = np.tile(cols, k)
            for c in range(blk.dim):
                R.append(rr)
                C.append(cc)
                Wi.append(np.full(k * k, 0 if rows is None else base + rows[c]))
        R = np.concatenate(R) if R else np.zeros(0, int)
        C = np.concatenate(C) if C else np.zeros(0, int)
        self._hess_w = np.concatenate(Wi) if Wi else np.zeros(0, int)
        self._H_pat = _Pattern(R, C, (n, n))
        self._compiled = True

    # ----------------------------------------------------------- evaluate

    def block_values(self, x, block):
        return [x[s] for s in block.slots]

    def evaluate(self, x, order=2):
        """Cost, constraint values and (for ``order >= 1``) sparse derivatives at ``x``."""
        if not self._compiled:
            self.compile()
        n = self.n
        f = 0.0
        h = np.zeros(self.l)
        g = np.zeros(self.m)
        cache = {}
        grad = np.zeros(n) if order > 0 else None
        for blk in self.costs:
            r, J, H = blk.evaluate(self.block_values(x, blk), order)
            f += float(r[0])
            if order > 0:
                np.add.at(grad, self._block_cols[id(blk)], J[0])
            cache[id(blk)] = H
        JE_data, JI_data = [], []
        for items, vec, store in ((self.eq, h, JE_data), (self.ineq, g, JI_data)):
            for blk, rows in items:
                r, J, H = blk.evaluate(self.block_values(x, blk), order)
                np.add.at(vec, rows, r)
                if order > 0:
                    store.append(J.ravel())
                cache[id(blk)] = H
        ev = Evaluation(f=f, h=h, g=g)
        if order > 0:
            ev.grad = grad
            ev.JE = self._JE_pat.build(np.concatenate(JE_data) if JE_data else np.zeros(0))
            ev.JI = self._JI_pat.build(np.concatenate(JI_data) if JI_data else np.zeros(0))
        if order > 1:
            parts = [cache[id(blk)].reshape(-1) for blk, _, _ in self._hess_blocks]
            ev.hess_data = np.concatenate(parts) if parts else np.zeros(0)
        return ev

    def lagrangian_hessian(self, ev, y, z):
        """``Hess f + sum y_i Hess h_i + sum z_i Hess g_i`` as CSR."""
        w = np.concatenate([[1.0], y, z])
        H = self._H_pat.build(ev.hess_data * w[self._hess_w])
        return H

    def retract(self, x, d):
        return retract(self.layout, x, d)

    def blocks(self):
        """All blocks with their role: ``("cost" | "eq" | "ineq", block)``."""
        out = [("cost", b) for b in self.costs]
        out += [("eq", b) for b, _ in self.eq]
        out += [("ineq", b) for b, _ in self.ineq]
        return out


# ------------------------------------------------------------- KKT system


@dataclass
class KKTSystem:
    """Newton system of the perturbed KKT conditions at ``(x, y, z, s)``."""

    H: sp.csr_matrix
    AE: sp.csr_matrix
    AI: sp.csr_matrix
    s: np.ndarray
    z: np.ndarray
    mu: float
    r_d: np.ndarray  # grad f + AE^T y + AI^T z
    r_E: np.ndarray  # h
    r_I: np.ndarray  # g + s
    r_C: np.ndarray  # S z - mu e

    @property
    def sizes(self):
        return self.H.shape[0], self.AE.shape[0], self.AI.shape[0]

    @property
    def rhs(self):
        return -np.concatenate([self.r_d, self.r_E, self.r_I, self.r_C])

    def full_matrix(self):
        """The unreduced 4x4 block matrix (for verification)."""
        n, l, m = self.sizes
        blocks = [[self.H, self.AE.T, self.AI.T, sp.csr_matrix((n, m))],
                  [self.AE, sp.csr_matrix((l, l)), sp.csr_matrix((l, m)), sp.csr_matrix((l, m))],
                  [self.AI, sp.csr_matrix((m, l)), sp.csr_matrix((m, m)), sp.identity(m)],
                  [sp.csr_matrix((m, n)), sp.csr_matrix((m, l)), sp.diags(self.s), sp.diags(self.z)]]
        keep = [0] + ([1] if l else []) + ([2, 3] if m else [])
        return sp.bmat([[blocks[i][j] for j in keep] for i in keep], format="csr")


def assemble(problem, x, y, z, s, mu, ev=None):
    """Assemble the Newton system; ``ev`` reuses a prior order-2 evaluation at ``x``."""
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(s) != problem.m or len(z) != problem.m or len(y) != problem.l:
        raise InvalidStateError("multiplier/slack dimensions do not match the problem")
    if np.any(s <= 0):
        raise InvalidStateError("slack must be strictly positive")
    if ev is None or ev.hess_data is None:
        ev = problem.evaluate(x, order=2)
    H = problem.lagrangian_hessian(ev, y, z)
    r_d = ev.grad + ev.JE.T @ y + ev.JI.T @ z
    return KKTSystem(H=H, AE=ev.JE, AI=ev.JI, s=s, z=z, mu=float(mu), r_d=r_d,
                     r_E=ev.h.copy(), r_I=ev.g + s, r_C=s * z - mu)


@dataclass
class NewtonDirection:
    dx: np.ndarray
    dy: np.ndarray
    dz: np.ndarray
    ds: np.ndarray
    delta_w: float = 0.0
    residual: float = 0.0
    t_factor: float = 0.0


def reduced_matrix(system, delta_w=0.0):
    n, l, m = system.sizes
    sigma = system.z / system.s
    K11 = system.H
    if m:
        K11 = K11 + system.AI.T @ sp.diags(sigma) @ system.AI
    if delta_w:
        K11 = K11 + delta_w * sp.identity(n, format="csr")
    if l:
        return sp.bmat([[K11, system.AE.T], [system.AE, None]], format="csc")
    return sp.csc_matrix(K11)


def _dependent_pivot(K):
    """Index of the first column found linearly dependent (QR with column pivoting)."""
    if K.shape[0] > 4000:
        return -1
    A = K.toarray()
    _, Rm, P = scipy.linalg.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(Rm))
    tol = max(A.shape) * np.finfo(float).eps * (d[0] if len(d) and d[0] > 0 else 1.0)
    rank = int(np.sum(d > tol))
    return int(P[rank]) if rank < len(P) else -1


def _factor(K):
    t0 = time.perf_counter()
    try:
        lu = spla.splu(K, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularKKTError(f"KKT factorization failed: {exc}", _dependent_pivot(K)) from exc
    # pivot i of U belongs to column argsort(perm_c)[i] of K; compare each pivot with
    # its own column scale, since Z S^-1 legitimately spans many orders of magnitude
    cols = np.argsort(lu.perm_c)
    d = np.abs(lu.U.diagonal())
    scale = np.maximum(abs(K).max(axis=0).toarray().ravel()[cols], 1.0)
    ratio = d / scale
    if not np.all(np.isfinite(d)) or ratio.min() <= PIVOT_TOL:
        i = int(np.argmin(np.where(np.isfinite(d), ratio, -1.0)))
        raise SingularKKTError("KKT factorization produced a vanishing pivot", int(cols[i]))
    return lu, time.perf_counter() - t0


def solve_newton(system, regularize=False, delta0=1e-8, delta_max=1e4, curvature_tol=1e-8):
    """Solve the Newton system for ``(d_x, d_y, d_z, d_s)``.

    The slack and inequality-multiplier rows are eliminated
    (``Sigma = Z S^-1``), leaving the symmetric saddle-point system

        [H + AI^T Sigma AI   AE^T] [dx]   [-r_d - AI^T S^-1 (Z r_I - r_C)]
        [AE                   0  ] [dy] = [-r_E                          ]

    which is factorized with a sparse LU and refined once.  With
    ``regularize`` a multiple of the identity is added to the Hessian block
    after a failed factorization, or when the step has curvature
    ``dx^T K11 dx < curvature_tol |dx|^2``, escalating by 10x.
    """
    n, l, m = system.sizes
    s, z = system.s, system.z
    rhs1 = -system.r_d
    if m:
        rhs1 = rhs1 - system.AI.T @ ((z * system.r_I - system.r_C) / s)
    rhs = np.concatenate([rhs1, -system.r_E])
    delta = 0.0
    t_fac = 0.0
    while True:
        K = reduced_matrix(system, delta)
        try:
            lu, t = _factor(K)
        except SingularKKTError:
            if not regularize or delta * 10.0 > delta_max:
                raise
            delta = delta0 if delta == 0.0 else 10.0 * delta
            continue
        t_fac += t
        sol = lu.solve(rhs)
        res = rhs - K @ sol
        sol = sol + lu.solve(res)
        res = rhs - K @ sol
        bound = SOLVE_TOL * (abs(K).max() * np.max(np.abs(sol), initial=0.0) + np.max(np.abs(rhs), initial=0.0))
        if not np.all(np.isfinite(sol)) or np.max(np.abs(res), initial=0.0) > bound:
            if not regularize or delta * 10.0 > delta_max:
                raise SingularKKTError("Newton solve is inaccurate: the system is numerically singular")
            delta = delta0 if delta == 0.0 else 10.0 * delta
            continue
        if not regularize:
            break
        # inertia-free test: accept only steps with positive curvature along dx
        dx = sol[:n]
        curv = dx @ (K[:n, :n] @ dx)
        if curv >= curvature_tol * (dx @ dx) or delta * 10.0 > delta_max:
            break
        delta = max(delta0, 10.0 * delta) if delta else max(delta0, 1e-4)
    scale = max(1.0, np.max(np.abs(rhs)) if len(rhs) else 1.0)
    dx, dy = sol[:n], sol[n:]
    if m:
        ds = -system.r_I - system.AI @ dx
        dz = (-system.r_C - z * ds) / s
    else:
        ds = dz = np.zeros(0)
    return NewtonDirection(dx, dy, dz, ds, delta_w=delta,
                           residual=float(np.max(np.abs(res)) / scale) if len(res) else 0.0,
                           t_factor=t_fac)


def full_residual(system, d):
    """Relative residual of ``d`` in the unreduced Newton system."""
    K = system.full_matrix()
    sol = np.concatenate([d.dx, d.dy, d.dz, d.ds])
    rhs = system.rhs
    return float(np.max(np.abs(K @ sol - rhs)) / max(1.0, np.max(np.abs(rhs))))


# ------------------------------------------------------------ error metrics

S_MAX = 100.0


@dataclass
class ErrorMetrics:
    E_mu: float
    E_0: float
    eps_KKT: float
    eps_E: float
    eps_I: float
    # raw ingredients (enough to recompute E_0 and E_mu)
    kkt_inf: float = 0.0
    comp_mu_inf: float = 0.0
    comp_0_inf: float = 0.0
    s_d: float = 1.0
    s_c: float = 1.0


def scaling(y, z, s_max=S_MAX):
    """Dual scalings ``(s_d, s_c)`` of the error metric."""
    l, m = len(y), len(z)
    ysum = np.abs(y).sum() + np.abs(z).sum()
    s_d = max(s_max, ysum / (l + m)) / s_max if l + m else 1.0
    s_c = max(s_max, np.abs(z).sum() / m) / s_max if m else 1.0
    return s_d, s_c


def error_metrics(problem, x, y, z, s, mu, ev=None):
    """``E_mu``, ``E_0`` and their components at ``(x, y, z, s)``."""
    if ev is None or ev.grad is None:
        ev = problem.evaluate(x, order=1)
    return metrics_from_residuals(ev.grad + ev.JE.T @ y + ev.JI.T @ z, ev.h, y, z, s, mu)


def metrics_from_residuals(r_d, h, y, z, s, mu):
    s_d, s_c = scaling(y, z)
    kkt = float(np.max(np.abs(r_d))) if len(r_d) else 0.0
    eps_E = float(np.max(np.abs(h))) if len(h) else 0.0
    sz = s * z
    c_mu = float(np.max(np.abs(sz - mu))) if len(sz) else 0.0
    c_0 = float(np.max(np.abs(sz))) if len(sz) else 0.0
    eps_KKT = kkt / s_d
    eps_I = c_mu / s_c
    E_mu = max(eps_KKT, eps_E, eps_I)
    E_0 = max(eps_KKT, eps_E, c_0 / s_c)
    return ErrorMetrics(E_mu, E_0, eps_KKT, eps_E, eps_I, kkt, c_mu, c_0, s_d, s_c)


def replay_E0(kkt_inf, eps_E, comp_0_inf, s_d, s_c):
    return max(kkt_inf / s_d, eps_E, comp_0_inf / s_c)


# ------------------------------------------------------------- envelopes


def kkt_envelope_violations(problem, system, couplings=()):
    """Count reduced-KKT nonzeros outside the time/body envelope.

    Allowed: variable pairs at most one stage apart whose body sets touch
    (same body or a declared coupling pair); constraint rows against
    variables in ``[stage - 1, stage]`` with touching body sets.
    """
    coupled = {(a, b) for a, b in couplings} | {(b, a) for a, b in couplings}

    def touch(A, B):
        if not A or not B:
            return True
        return any(a == b or (a, b) in coupled for a in A for b in B)

    lay = problem.layout
    var_stage = np.empty(lay.n, dtype=int)
    var_bodies = [None] * lay.n
    for s in lay.slots:
        var_stage[s.offset:s.offset + s.dim] = s.stage
        for i in range(s.offset, s.offset + s.dim):
            var_bodies[i] = s.bodies
    K = reduced_matrix(system).tocoo()
    n = lay.n
    bad = 0
    for i, j in zip(K.row, K.col):
        if i < n and j < n:
            ok = abs(var_stage[i] - var_stage[j]) <= 1 and touch(var_bodies[i], var_bodies[j])
        else:
            r, c = (i - n, j) if i >= n else (j - n, i)
            if c >= n:
                ok = False
            else:
                st, bd = problem.eq_tags[r]
                ok = st - 1 <= var_stage[c] <= st and touch(bd, var_bodies[c])
        bad += not ok
    return bad
