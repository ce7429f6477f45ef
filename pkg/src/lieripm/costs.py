"""Stage and terminal costs on SO(3) x R^3 with second-order retraction expansions."""

from dataclasses import dataclass, field

import numpy as np

from .constraints import ROT, Block


def chordal_cost(R, R_d, W):
    """``0.5 * tr((R R_d^T - I) W (R R_d^T - I)^T)``."""
    D = R @ R_d.T - np.eye(3)
    return 0.5 * np.trace(D @ W @ D.T)


def _chordal_parts(R, R_d, W):
    # for orthogonal R, R_d and symmetric W the cost is tr(W) - tr(B exp(hat(xi))), B = R_d^T W R
    B = R_d.T @ W @ R
    grad = np.array([B[2, 1] - B[1, 2], B[0, 2] - B[2, 0], B[1, 0] - B[0, 1]])
    hess = np.trace(B) * np.eye(3) - 0.5 * (B + B.T)
    return grad, hess


def chordal_cost_expansion(R, R_d, W, xi):
    """Coefficients of ``t`` and ``t**2`` of ``chordal_cost(R exp(t xi), R_d, W)``."""
    grad, hess = _chordal_parts(R, R_d, W)
    xi = np.asarray(xi, dtype=float)
    return grad @ xi, 0.5 * xi @ hess @ xi


def quad_cost(p, p_d, W):
    """Value, gradient and Hessian of ``0.5 (p - p_d)^T W (p - p_d)``."""
    e = np.asarray(p, dtype=float) - np.asarray(p_d, dtype=float)
    We = W @ e
    return 0.5 * e @ We, We, np.array(W, dtype=float)


class ChordalCostBlock(Block):
    """Scalar block ``chordal_cost(R, R_d, W)`` on one rotation slot."""

    kinds = (ROT,)
    dim = 1
    family = "chordal_cost"

    def __init__(self, slots, R_d, W):
        super().__init__(slots)
        self.R_d = np.asarray(R_d, dtype=float)
        self.W = 0.5 * (np.asarray(W, dtype=float) + np.asarray(W, dtype=float).T)

    def evaluate(self, vals, order=2):
        R = vals[0]
        r = np.array([chordal_cost(R, self.R_d, self.W)])
        if order == 0:
            return r, None, None
        grad, hess = _chordal_parts(R, self.R_d, self.W)
        return r, grad[None], hess[None]


class QuadCostBlock(Block):
    """Scalar block ``quad_cost(x, target, W)`` on one Euclidean slot."""

    dim = 1
    family = "quad_cost"

    def __init__(self, slots, target, W):
        self.target = np.asarray(target, dtype=float)
        self.kinds = (len(self.target),)
        super().__init__(slots)
        self.W = 0.5 * (np.asarray(W, dtype=float) + np.asarray(W, dtype=float).T)
        if self.W.shape != (len(self.target), len(self.target)):
            raise ValueError("weight shape does not match target")

    def evaluate(self, vals, order=2):
        val, grad, hess = quad_cost(vals[0], self.target, self.W)
        return np.array([val]), grad[None], hess[None]


@dataclass
class CostSpec:
    """Weights and targets of the docking-style stage/terminal cost.

    Stage costs apply at ``k = 0..N-1`` and the terminal cost at ``N``
    (the same weights scaled by ``terminal_scale``).  Input regularization
    ``0.5 (u - u_ref)^T W_u (u - u_ref)`` keeps the input block nonsingular.
    """

    W_R: np.ndarray = field(default_factory=lambda: np.eye(3))
    W_p: np.ndarray = field(default_factory=lambda: np.eye(3))
    W_F: np.ndarray = field(default_factory=lambda: np.eye(3))
    W_v: np.ndarray = field(default_factory=lambda: np.eye(3))
    w_u: float = 1e-4
    terminal_scale: float = 1.0
    R_d: np.ndarray = field(default_factory=lambda: np.eye(3))
    p_d: np.ndarray = field(default_factory=lambda: np.zeros(3))
    F_d: np.ndarray = field(default_factory=lambda: np.eye(3))
    v_d: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("W_R", "W_p", "W_F", "W_v"):
            W = np.asarray(getattr(self, name), dtype=float)
            if np.linalg.norm(W - W.T) > 1e-12 or np.linalg.eigvalsh(W).min() < -1e-12:
                raise ValueError(f"{name} must be symmetric positive semidefinite")
            setattr(self, name, W)
        if self.w_u < 0:
            raise ValueError("w_u must be nonnegative")


def state_cost_blocks(slots, spec, scale=1.0):
    """Cost blocks for one body state; ``slots`` is ``(R, p, F, v)``."""
    sR, sp, sF, sv = slots
    return [ChordalCostBlock((sR,), spec.R_d, scale * spec.W_R),
            QuadCostBlock((sp,), spec.p_d, scale * spec.W_p),
            ChordalCostBlock((sF,), spec.F_d, scale * spec.W_F),
            QuadCostBlock((sv,), spec.v_d, scale * spec.W_v)]


def input_cost_block(slot, u_ref, w_u):
    u_ref = np.asarray(u_ref, dtype=float)
    return QuadCostBlock((slot,), u_ref, w_u * np.eye(len(u_ref)))
