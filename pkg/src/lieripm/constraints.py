"""Constraint blocks with closed-form second-order retraction expansions.

Every block is a smooth vector function of a handful of variable slots.
``evaluate(vals, order)`` returns ``(r, J, H)`` where, for a local tangent
direction ``d`` (rotation slots in body coordinates, Euclidean slots plain),

    block(retract(vals, t d)) = r + t J d + (t**2 / 2) d^T H[c] d + O(t**3)

component-wise.  Slots are referenced by index into the owning problem's
layout; the block itself only sees the local values.
"""

import numpy as np

from .lie import BRACKET, chain_hessian, exp_so3, hat, log_so3, vee_skew

ROT = "rot"
E_X, E_Y, E_Z = np.eye(3)


def local_dims(kinds):
    return tuple(3 if k == ROT else int(k) for k in kinds)


def retract_local(vals, kinds, d, t=1.0):
    """Move each local value along its slice of ``d`` scaled by ``t``."""
    out = []
    i = 0
    for v, k in zip(vals, kinds):
        if k == ROT:
            out.append(v @ exp_so3(t * d[i:i + 3]))
            i += 3
        else:
            out.append(v + t * d[i:i + int(k)])
            i += int(k)
    return out


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _skew_vee_batch(X):
    """``vee(X - X^T)`` for a stack of 3x3 matrices (last two axes)."""
    return np.stack([X[..., 2, 1] - X[..., 1, 2],
                     X[..., 0, 2] - X[..., 2, 0],
                     X[..., 1, 0] - X[..., 0, 1]], axis=-1)


HAT_BASIS = np.array([hat(e) for e in np.eye(3)])


class Block:
    """Base class.  Subclasses set ``kinds``, ``dim`` and implement ``evaluate``."""

    kinds = ()
    dim = 0
    linear = False
    # False when the supplied expansion is of a re-centred function (see RotKinBlock)
    plain_curve = True
    family = "block"

    def __init__(self, slots):
        self.slots = tuple(int(s) for s in slots)
        if len(self.slots) != len(self.kinds):
            raise ValueError(f"{type(self).__name__} expects {len(self.kinds)} slots")

    @property
    def nloc(self):
        return sum(local_dims(self.kinds))

    def value(self, vals):
        return self.evaluate(vals, order=0)[0]

    def evaluate(self, vals, order=2):
        raise NotImplementedError

    def curve(self, vals, d, t):
        """Function value along the retraction curve whose expansion ``evaluate`` provides."""
        return self.value(retract_local(vals, self.kinds, d, t))

    def expansion(self, vals, d):
        """First- and second-order coefficients in ``t`` along direction ``d``."""
        _, J, H = self.evaluate(vals, order=2)
        d = np.asarray(d, dtype=float)
        return J @ d, 0.5 * np.einsum("i,cij,j->c", d, H, d)


# ---------------------------------------------------------------- kinematics


def rot_kin_value(R_next, R_k, F_k):
    return log_so3(R_next.T @ R_k @ F_k)


def rot_kin_coeffs(R_next, R_k, F_k):
    """Transport matrices for ``(xi_{k+1}, xi_k, xi_F)``: ``(-Y^T, F_k^T, I)``."""
    Y = R_next.T @ R_k @ F_k
    return np.array([-Y.T, F_k.T, np.eye(3)])


def rot_kin_expansion(R_next, R_k, F_k, xi_next, xi_k, xi_F):
    """Coefficients of ``t`` and ``t**2`` of ``log(Ybar^-1 Y(t))`` for the rotational kinematics."""
    A = rot_kin_coeffs(R_next, R_k, F_k)
    a = [A[0] @ xi_next, A[1] @ xi_k, A[2] @ xi_F]
    second = 0.5 * (np.cross(a[0], a[1]) + np.cross(a[0], a[2]) + np.cross(a[1], a[2]))
    return a[0] + a[1] + a[2], second


class RotKinBlock(Block):
    """``log(R_{k+1}^T R_k F_k) = 0``.

    The expansion is that of ``log(Ybar^-1 Y(t)) + log(Ybar)``: shifting the
    operating point to ``Ybar`` removes the Jacobian of ``log`` and the two
    functions agree to first order whenever the constraint holds.
    """

    kinds = (ROT, ROT, ROT)
    dim = 3
    plain_curve = False
    family = "rot_kin"

    def evaluate(self, vals, order=2):
        R_next, R_k, F_k = vals
        r = rot_kin_value(R_next, R_k, F_k)
        if order == 0:
            return r, None, None
        A = rot_kin_coeffs(R_next, R_k, F_k)
        J = np.concatenate(A, axis=1)
        return r, J, (chain_hessian(A) if order > 1 else None)

    def curve(self, vals, d, t):
        R_next, R_k, F_k = vals
        Ybar = R_next.T @ R_k @ F_k
        Rn, Rk, Fk = retract_local(vals, self.kinds, d, t)
        return log_so3(Ybar.T @ Rn.T @ Rk @ Fk) + log_so3(Ybar)


class TransKinBlock(Block):
    """``p_{k+1} - p_k - v_k dt = 0``."""

    kinds = (3, 3, 3)
    dim = 3
    linear = True
    family = "trans_kin"

    def __init__(self, slots, dt):
        super().__init__(slots)
        self.dt = float(dt)
        self._J = np.hstack([np.eye(3), -np.eye(3), -self.dt * np.eye(3)])

    def evaluate(self, vals, order=2):
        p_next, p_k, v_k = vals
        return p_next - p_k - v_k * self.dt, self._J, None


class InitialRotBlock(Block):
    """``log(R_init^T R) = 0`` with the same re-centred expansion as :class:`RotKinBlock`."""

    kinds = (ROT,)
    dim = 3
    linear = True
    plain_curve = False
    family = "initial_rot"

    def __init__(self, slots, R_init):
        super().__init__(slots)
        self.R_init = np.asarray(R_init, dtype=float)

    def evaluate(self, vals, order=2):
        return log_so3(self.R_init.T @ vals[0]), np.eye(3), None

    def curve(self, vals, d, t):
        return t * np.asarray(d[:3]) + log_so3(self.R_init.T @ vals[0])


class InitialVecBlock(Block):
    """``x - x_init = 0`` on a Euclidean slot."""

    linear = True
    family = "initial_vec"

    def __init__(self, slots, target):
        self.target = np.asarray(target, dtype=float)
        self.dim = len(self.target)
        self.kinds = (self.dim,)
        super().__init__(slots)
        self._J = np.eye(self.dim)

    def evaluate(self, vals, order=2):
        return vals[0] - self.target, self._J, None


# ------------------------------------------------------------------ dynamics


def rot_dyn_value(F_k, F_next, I_ns, tau=None, dt=1.0):
    J = I_ns
    M = (F_next @ J - J @ F_next.T) - (J @ F_k - F_k.T @ J)
    r = np.array([M[2, 1], M[0, 2], M[1, 0]])
    if tau is not None:
        r = r - np.asarray(tau) * dt * dt
    return r


def rot_dyn_expansion(F_k, F_next, I_ns, xi_k, xi_next):
    """``t`` and ``t**2`` coefficients of the rotational dynamics residual.

    Obtained by substituting ``exp(t xi) ~ I + t hat(xi) + t**2 hat(xi)**2 / 2``
    for both discrete rotations.
    """
    J = I_ns
    X1, X0 = hat(xi_next), hat(xi_k)
    first = (F_next @ X1 @ J + J @ X1 @ F_next.T) - (J @ F_k @ X0 + X0 @ F_k.T @ J)
    second = 0.5 * (F_next @ X1 @ X1 @ J - J @ X1 @ X1 @ F_next.T) \
        - 0.5 * (J @ F_k @ X0 @ X0 - X0 @ X0 @ F_k.T @ J)
    return vee_skew(first), vee_skew(second)


class RotDynBlock(Block):
    """Discrete rotational dynamics ``F_{k+1}J - JF_{k+1}^T - (JF_k - F_k^TJ) - hat(tau) dt^2``.

    Slots are ``(F_k, F_{k+1})`` optionally followed by a torque slot.
    """

    dim = 3
    family = "rot_dyn"

    def __init__(self, slots, I_ns, dt, with_torque=True):
        self.kinds = (ROT, ROT, 3) if with_torque else (ROT, ROT)
        super().__init__(slots)
        self.I_ns = np.asarray(I_ns, dtype=float)
        self.dt = float(dt)

    def evaluate(self, vals, order=2):
        F0, F1 = vals[0], vals[1]
        Jn = self.I_ns
        W1 = F1 @ Jn - Jn @ F1.T
        W0 = Jn @ F0 - F0.T @ Jn
        r = np.array([W1[2, 1] - W0[2, 1], W1[0, 2] - W0[0, 2], W1[1, 0] - W0[1, 0]])
        tq = len(self.kinds) == 3
        if tq:
            r = r - vals[2] * self.dt ** 2
        if order == 0:
            return r, None, None
        nloc = 9 if tq else 6
        Jac = np.zeros((3, nloc))
        # columns: vee(X - X^T) with X = F1 hat(e) J and X = J F0 hat(e)
        Jac[:, 3:6] = _skew_vee_batch(F1 @ HAT_BASIS @ Jn).T
        Jac[:, 0:3] = -_skew_vee_batch(Jn @ F0 @ HAT_BASIS).T
        if tq:
            Jac[:, 6:9] = -self.dt ** 2 * np.eye(3)
        if order < 2:
            return r, Jac, None
        w1 = np.array([W1[2, 1], W1[0, 2], W1[1, 0]])
        w0 = np.array([W0[2, 1], W0[0, 2], W0[1, 0]])
        H = np.zeros((3, nloc, nloc))
        eye = np.eye(3)
        H[:, 3:6, 3:6] = _sym(Jn @ BRACKET @ F1) - w1[:, None, None] * eye
        H[:, 0:3, 0:3] = -(_sym(BRACKET @ Jn @ F0) - w0[:, None, None] * eye)
        return r, Jac, H


def trans_dyn_value(v_k, v_next, m, g, dt, R_next=None, u_z=0.0):
    r = m * v_next - m * v_k - m * g * dt
    if R_next is not None:
        r = r - R_next[:, 2] * u_z * dt
    return r


class TransDynBlock(Block):
    """``m v_{k+1} - m v_k - m g dt - R_{k+1} e_z u_z dt``.

    Slots ``(v_k, v_{k+1})`` or ``(v_k, v_{k+1}, R_{k+1}, u_z)`` when thrust is present.
    """

    dim = 3
    family = "trans_dyn"

    def __init__(self, slots, m, g, dt, with_thrust=True):
        self.kinds = (3, 3, ROT, 1) if with_thrust else (3, 3)
        self.linear = not with_thrust
        super().__init__(slots)
        self.m = float(m)
        self.g = np.asarray(g, dtype=float)
        self.dt = float(dt)

    def evaluate(self, vals, order=2):
        v0, v1 = vals[0], vals[1]
        m, dt = self.m, self.dt
        r = m * v1 - m * v0 - m * self.g * dt
        thrust = len(self.kinds) == 4
        if thrust:
            R, u = vals[2], float(vals[3][0])
            r = r - R[:, 2] * u * dt
        if order == 0:
            return r, None, None
        nloc = 10 if thrust else 6
        Jac = np.zeros((3, nloc))
        Jac[:, 0:3] = -m * np.eye(3)
        Jac[:, 3:6] = m * np.eye(3)
        if not thrust:
            return r, Jac, None
        Jac[:, 6:9] = dt * u * R @ hat(E_Z)
        Jac[:, 9] = -dt * R[:, 2]
        if order < 2:
            return r, Jac, None
        H = np.zeros((3, nloc, nloc))
        eye = np.eye(3)
        for c in range(3):
            rc = R[c]
            H[c, 6:9, 6:9] = -dt * u * (_sym(np.outer(rc, E_Z)) - rc[2] * eye)
            cross = -dt * np.cross(E_Z, rc)
            H[c, 6:9, 9] = cross
            H[c, 9, 6:9] = cross
        return r, Jac, H


# ------------------------------------------------------------ joint constraints


def pivot_residual(R1, p1, R2, p2, r1, r2):
    return R1 @ r1 + p1 - R2 @ r2 - p2


def pivot_expansion(R1, p1, R2, p2, r1, r2, xi1R, xi1p, xi2R, xi2p):
    """``t`` and ``t**2`` coefficients of the pivot residual along the retraction curve."""
    X1, X2 = hat(xi1R), hat(xi2R)
    first = R1 @ X1 @ r1 + xi1p - R2 @ X2 @ r2 - xi2p
    second = 0.5 * (R1 @ X1 @ X1 @ r1 - R2 @ X2 @ X2 @ r2)
    return first, second


class PivotBlock(Block):
    """``R_1 r_1 + p_1 - R_2 r_2 - p_2 = 0``.

    With ``fixed=(R_1, p_1)`` the first body is a fixed frame (e.g. the world)
    and the slots are ``(R_2, p_2)`` only.
    """

    dim = 3
    family = "pivot"

    def __init__(self, slots, r1, r2, fixed=None):
        self.fixed = None if fixed is None else (np.asarray(fixed[0], float), np.asarray(fixed[1], float))
        self.kinds = (ROT, 3) if fixed is not None else (ROT, 3, ROT, 3)
        super().__init__(slots)
        self.r1 = np.asarray(r1, dtype=float)
        self.r2 = np.asarray(r2, dtype=float)

    def _unpack(self, vals):
        if self.fixed is not None:
            return self.fixed[0], self.fixed[1], vals[0], vals[1]
        return vals

    def evaluate(self, vals, order=2):
        R1, p1, R2, p2 = self._unpack(vals)
        r = R1 @ self.r1 + p1 - R2 @ self.r2 - p2
        if order == 0:
            return r, None, None
        eye = np.eye(3)
        blocks2 = [R2 @ hat(self.r2), -eye]
        blocks1 = [-R1 @ hat(self.r1), eye]
        Jac = np.hstack(blocks2 if self.fixed is not None else blocks1 + blocks2)
        if order < 2:
            return r, Jac, None
        nloc = Jac.shape[1]
        H = np.zeros((3, nloc, nloc))
        o2 = 0 if self.fixed is not None else 6
        for c in range(3):
            s = R2[c]
            H[c, o2:o2 + 3, o2:o2 + 3] = -(_sym(np.outer(s, self.r2)) - (s @ self.r2) * eye)
            if self.fixed is None:
                q = R1[c]
                H[c, 0:3, 0:3] = _sym(np.outer(q, self.r1)) - (q @ self.r1) * eye
        return r, Jac, H


def axis_residual(R1, R2, axis=E_Z, perp=(E_X, E_Y)):
    n2 = R2 @ axis
    return np.array([(R1 @ u) @ n2 for u in perp])


def axis_expansion(R1, R2, xi1, xi2, axis=E_Z, perp=(E_X, E_Y)):
    """``t`` and ``t**2`` coefficients of ``(R_1 exp(t xi_1) u_i)^T (R_2 exp(t xi_2) n)``."""
    X1, X2 = hat(xi1), hat(xi2)
    M = R1.T @ R2
    first, second = [], []
    for u in perp:
        first.append(-(u @ X1 @ M @ axis) + u @ M @ X2 @ axis)
        second.append(0.5 * u @ X1 @ X1 @ M @ axis + 0.5 * u @ M @ X2 @ X2 @ axis
                      - u @ X1 @ M @ X2 @ axis)
    return np.array(first), np.array(second)


def _bilinear_rot_parts(u, M, w):
    """Derivatives of ``u^T exp(-t xi_1) M exp(t xi_2) w`` (see :class:`BilinearRotTerm`)."""
    Mw = M @ w
    Mtu = M.T @ u
    val = u @ Mw
    g1 = np.cross(u, Mw)
    g2 = np.cross(w, Mtu)
    eye = np.eye(3)
    H11 = _sym(np.outer(u, Mw)) - val * eye
    H22 = _sym(np.outer(Mtu, w)) - val * eye
    H12 = -hat(u) @ M @ hat(w)
    return val, g1, g2, H11, H22, H12


def unit_perp(axis):
    """Two unit vectors completing ``axis`` to a right-handed orthonormal frame."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    trial = E_X if abs(axis[0]) < 0.9 else E_Y
    u1 = trial - (trial @ axis) * axis
    u1 /= np.linalg.norm(u1)
    u2 = np.cross(axis, u1)
    return u1, u2


class AxisBlock(Block):
    """Revolute-axis alignment ``(R_1 u_i)^T (R_2 n) = 0`` for the two directions ``u_i`` normal to ``n``.

    The default ``n = e_z``, ``u = (e_x, e_y)``.  With ``fixed=R_1`` the slots are ``(R_2,)``.
    """

    dim = 2
    family = "axis"

    def __init__(self, slots, axis=E_Z, fixed=None):
        self.fixed = None if fixed is None else np.asarray(fixed, dtype=float)
        self.kinds = (ROT,) if fixed is not None else (ROT, ROT)
        super().__init__(slots)
        self.axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
        self.perp = (E_X, E_Y) if np.allclose(self.axis, E_Z) else unit_perp(self.axis)

    def evaluate(self, vals, order=2):
        if self.fixed is not None:
            R1, R2 = self.fixed, vals[0]
        else:
            R1, R2 = vals
        M = R1.T @ R2
        n = self.axis
        r = np.array([u @ M @ n for u in self.perp])
        if order == 0:
            return r, None, None
        one = self.fixed is not None
        nloc = 3 if one else 6
        Jac = np.zeros((2, nloc))
        H = np.zeros((2, nloc, nloc)) if order > 1 else None
        for i, u in enumerate(self.perp):
            _, g1, g2, H11, H22, H12 = _bilinear_rot_parts(u, M, n)
            if one:
                Jac[i] = g2
                if H is not None:
                    H[i] = H22
            else:
                Jac[i, :3], Jac[i, 3:] = g1, g2
                if H is not None:
                    H[i, :3, :3], H[i, 3:, 3:] = H11, H22
                    H[i, :3, 3:], H[i, 3:, :3] = H12, H12.T
        return r, Jac, H


class BilinearRotTerm:
    """Scalar ``coef * u^T exp(-t xi_a) M exp(t xi_b) w`` with ``u``, ``w`` affine in Euclidean slots.

    Local positions (offsets into a block's tangent vector) of the rotation
    perturbations ``a``/``b`` and the Euclidean directions entering ``u``
    and ``w`` may each be ``None``.  ``u = u0 + U @ x[u_pos]``.
    """

    __slots__ = ("coef", "a", "b", "u_pos", "U", "w_pos", "W")

    def __init__(self, coef, a=None, b=None, u_pos=None, U=None, w_pos=None, W=None):
        self.coef, self.a, self.b = coef, a, b
        self.u_pos, self.U, self.w_pos, self.W = u_pos, U, w_pos, W

    def accumulate(self, u, M, w, grad, hess):
        c = self.coef
        val, g1, g2, H11, H22, H12 = _bilinear_rot_parts(u, M, w)
        a, b = self.a, self.b
        if grad is None:
            return c * val
        Mw, Mtu = M @ w, M.T @ u
        if a is not None:
            grad[a:a + 3] += c * g1
        if b is not None:
            grad[b:b + 3] += c * g2
        if self.u_pos is not None:
            ku = self.U.shape[1]
            grad[self.u_pos:self.u_pos + ku] += c * (self.U.T @ Mw)
        if self.w_pos is not None:
            kw = self.W.shape[1]
            grad[self.w_pos:self.w_pos + kw] += c * (self.W.T @ Mtu)
        if hess is None:
            return c * val

        def put(i, di, j, dj, blk):
            hess[i:i + di, j:j + dj] += c * blk
            if i != j:
                hess[j:j + dj, i:i + di] += c * blk.T

        if a is not None:
            put(a, 3, a, 3, H11)
        if b is not None:
            put(b, 3, b, 3, H22)
        if a is not None and b is not None:
            put(a, 3, b, 3, H12)
        if self.u_pos is not None:
            U, ku = self.U, self.U.shape[1]
            if a is not None:
                put(a, 3, self.u_pos, ku, -hat(Mw) @ U)
            if b is not None:
                put(b, 3, self.u_pos, ku, hat(w) @ M.T @ U)
        if self.w_pos is not None:
            W, kw = self.W, self.W.shape[1]
            if a is not None:
                put(a, 3, self.w_pos, kw, hat(u) @ M @ W)
            if b is not None:
                put(b, 3, self.w_pos, kw, -hat(Mtu) @ W)
            if self.u_pos is not None:
                put(self.u_pos, self.U.shape[1], self.w_pos, kw, self.U.T @ M @ W)
        return c * val


class JointWrenchBlock(Block):
    """Constraint wrench and joint torque entering the dynamics rows of a joint's two bodies.

    Adds ``-dt^2 * (body torque)`` to each body's rotational-dynamics rows and
    ``-dt * (world force)`` to its translational rows, where the wrench is
    ``G(x_{k+1})^T lambda`` for the pivot (3) and axis (2) constraints plus
    a torque ``tau_j`` about the joint axis.  Slots:
    ``(R_a, R_b, lambda[5], tau_j[1])`` or, with a fixed parent, ``(R_b, lambda, tau_j)``.
    Rows (in order): rot_a, trans_a, rot_b, trans_b (parent rows absent when fixed).
    """

    family = "joint_wrench"

    def __init__(self, slots, r_a, r_b, axis, dt, fixed=None):
        self.fixed = None if fixed is None else np.asarray(fixed, dtype=float)
        self.kinds = (ROT, 5, 1) if fixed is not None else (ROT, ROT, 5, 1)
        super().__init__(slots)
        self.dim = 6 if fixed is not None else 12
        self.r_a = np.asarray(r_a, dtype=float)
        self.r_b = np.asarray(r_b, dtype=float)
        self.axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
        self.perp = (E_X, E_Y) if np.allclose(self.axis, E_Z) else unit_perp(self.axis)
        self.dt = float(dt)
        self._build_terms()

    def _build_terms(self):
        one = self.fixed is not None
        ia, ib = (None, 0) if one else (0, 3)
        il = 3 if one else 6
        it = il + 5
        n, dt2 = self.axis, self.dt ** 2
        Lp = np.zeros((3, 5))
        Lp[:, :3] = np.eye(3)
        La = np.zeros((3, 5))
        La[:, 3], La[:, 4] = self.perp
        # (row, matrix key, term, u-spec, w-spec); specs are ("const", v), ("lp",), ("ell",), ("ell_x", e), ("tau", e)
        terms = []
        ra, rb = (None, 0) if one else (0, 6)
        for c, e in enumerate(np.eye(3)):
            if not one:
                # parent torque: hat(r_a) R_a^T lp + sum_i lam_i u_i x (M n) - tau_j M n
                terms.append((ra + c, "aT", BilinearRotTerm(-dt2, a=ia, w_pos=il, W=Lp),
                              ("const", np.cross(e, self.r_a)), ("lp",)))
                terms.append((ra + c, "aTb", BilinearRotTerm(-dt2, a=ia, b=ib, u_pos=il, U=hat(e) @ La),
                              ("ell_x", e), ("const", n)))
                terms.append((ra + c, "aTb", BilinearRotTerm(dt2, a=ia, b=ib, u_pos=it, U=e.reshape(3, 1)),
                              ("tau", e), ("const", n)))
            # child torque: -hat(r_b) R_b^T lp + sum_i lam_i n x (R_b^T R_a u_i) + tau_j n
            terms.append((rb + c, "bT", BilinearRotTerm(dt2, a=ib, w_pos=il, W=Lp),
                          ("const", np.cross(e, self.r_b)), ("lp",)))
            terms.append((rb + c, "bTa", BilinearRotTerm(-dt2, a=ib, b=ia, w_pos=il, W=La),
                          ("const", np.cross(e, n)), ("ell",)))
        self._terms = terms
        lin = np.zeros((self.dim, self.nloc))
        for c in range(3):
            if not one:
                lin[3 + c, il + c] = -self.dt
            lin[rb + 3 + c, il + c] = self.dt
            lin[rb + c, it] = -dt2 * n[c]
        self._lin = lin
        self._il = il

    def evaluate(self, vals, order=2):
        if self.fixed is not None:
            Ra, Rb, lam, tq = self.fixed, vals[0], vals[1], vals[2]
        else:
            Ra, Rb, lam, tq = vals
        nloc = self.nloc
        x_lin = np.zeros(nloc)
        x_lin[self._il:self._il + 5] = lam
        x_lin[self._il + 5] = tq[0]
        r = self._lin @ x_lin
        Jac = self._lin.copy() if order > 0 else None
        H = np.zeros((self.dim, nloc, nloc)) if order > 1 else None
        ell = lam[3] * self.perp[0] + lam[4] * self.perp[1]
        vecs = {"lp": lam[:3], "ell": ell}
        mats = {"aT": Ra.T, "aTb": Ra.T @ Rb, "bT": Rb.T, "bTa": Rb.T @ Ra}

        def resolve(spec):
            if spec[0] == "const":
                return spec[1]
            if spec[0] == "ell_x":
                return np.cross(spec[1], ell)
            if spec[0] == "tau":
                return spec[1] * tq[0]
            return vecs[spec[0]]

        for row, key, term, us, ws in self._terms:
            g = None if Jac is None else np.zeros(nloc)
            h = None if H is None else np.zeros((nloc, nloc))
            r[row] += term.accumulate(resolve(us), mats[key], resolve(ws), g, h)
            if g is not None:
                Jac[row] += g
            if h is not None:
                H[row] += h
        return r, Jac, H


# ----------------------------------------------------------------- inequalities


def obstacle_residual(p, center, radius):
    """``r^2 - (x - x_c)^2 - (y - y_c)^2``; nonpositive outside the cylinder."""
    dx, dy = p[0] - center[0], p[1] - center[1]
    return radius * radius - dx * dx - dy * dy


class ObstacleBlock(Block):
    """Vertical cylinder avoidance in the ``g(x) <= 0`` convention."""

    kinds = (3,)
    dim = 1
    family = "obstacle"
    _H = np.diag([-2.0, -2.0, 0.0])[None]

    def __init__(self, slots, center, radius):
        super().__init__(slots)
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.center = np.asarray(center, dtype=float)[:2]
        self.radius = float(radius)

    def evaluate(self, vals, order=2):
        p = vals[0]
        dx, dy = p[0] - self.center[0], p[1] - self.center[1]
        r = np.array([self.radius ** 2 - dx * dx - dy * dy])
        if order == 0:
            return r, None, None
        return r, np.array([[-2.0 * dx, -2.0 * dy, 0.0]]), (self._H if order > 1 else None)


class BoxBlock(Block):
    """Rows ``lo - u <= 0`` and ``u - hi <= 0`` for each finite bound."""

    linear = True
    family = "box"

    def __init__(self, slots, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(lo > hi):
            raise ValueError("lo must not exceed hi")
        self.kinds = (len(lo),)
        super().__init__(slots)
        rows, sign, bound = [], [], []
        for i in range(len(lo)):
            if np.isfinite(lo[i]):
                rows.append(i), sign.append(-1.0), bound.append(lo[i])
            if np.isfinite(hi[i]):
                rows.append(i), sign.append(1.0), bound.append(hi[i])
        self.index = np.array(rows, dtype=int)
        self.sign = np.array(sign)
        self.bound = np.array(bound)
        self.dim = len(rows)
        self._J = np.zeros((self.dim, len(lo)))
        self._J[np.arange(self.dim), self.index] = self.sign

    def evaluate(self, vals, order=2):
        u = vals[0]
        return self.sign * (u[self.index] - self.bound), self._J, None


def box_bounds(u, lo, hi):
    """Inequality rows of a box constraint at ``u`` (see :class:`BoxBlock`)."""
    return BoxBlock((0,), lo, hi).value([np.asarray(u, dtype=float)])


# ------------------------------------------------------------ verification


class FaultyBlock(Block):
    """Wraps a block and perturbs one Jacobian entry (fault injection for checkers)."""

    def __init__(self, inner, entry=(0, 0), delta=1e-3):
        self.inner = inner
        self.kinds = inner.kinds
        self.dim = inner.dim
        self.linear = inner.linear
        self.plain_curve = inner.plain_curve
        self.family = inner.family
        self.slots = inner.slots
        self.entry = entry
        self.delta = delta

    def evaluate(self, vals, order=2):
        r, J, H = self.inner.evaluate(vals, order)
        if J is not None:
            J = J.copy()
            J[self.entry] += self.delta
        return r, J, H

    def curve(self, vals, d, t):
        return self.inner.curve(vals, d, t)


def fd_check(block, vals, trials=10, rng=None, h_grad=1e-5, h_hess=1e-3, directions=None):
    """Compare a block's closed-form expansion against finite differences.

    The gradient is checked against central differences of the function along
    the retraction curve (step ``h_grad``).  For the Hessian quadratic form the
    reference is the central difference (step ``h_hess``) of the first-order
    term along the curve; for re-centred blocks (``plain_curve`` false) the
    second difference of curve values is used instead.  Errors are
    ``|fd - analytic|_inf / max(1, |analytic|_inf)``.

    Returns ``(max gradient error, max Hessian error)``.
    """
    rng = np.random.default_rng() if rng is None else rng
    r0, J, H = block.evaluate(vals, order=2)
    n = block.nloc
    H = np.zeros((block.dim, n, n)) if H is None else H
    g_err = h_err = 0.0
    for k in range(trials):
        d = rng.normal(size=n) if directions is None else np.asarray(directions[k], dtype=float)
        an_g = J @ d
        fd_g = (block.curve(vals, d, h_grad) - block.curve(vals, d, -h_grad)) / (2 * h_grad)
        g_err = max(g_err, np.max(np.abs(fd_g - an_g)) / max(1.0, np.max(np.abs(an_g))))
        an_h = np.einsum("i,cij,j->c", d, H, d)
        if block.plain_curve:
            jp = block.evaluate(retract_local(vals, block.kinds, d, h_hess), order=1)[1]
            jm = block.evaluate(retract_local(vals, block.kinds, d, -h_hess), order=1)[1]
            fd_h = (jp @ d - jm @ d) / (2 * h_hess)
        else:
            fd_h = (block.curve(vals, d, h_hess) - 2 * block.curve(vals, d, 0.0)
                    + block.curve(vals, d, -h_hess)) / h_hess ** 2
        h_err = max(h_err, np.max(np.abs(fd_h - an_h)) / max(1.0, np.max(np.abs(an_h))))
    return g_err, h_err
