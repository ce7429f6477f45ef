"""SO(3) primitives and second-order BCH expansions.

Coordinates follow the right-trivialized convention used everywhere in the
package: a tangent vector at ``R`` is ``R @ hat(xi)`` and the retraction is
``R @ exp_so3(xi)``.
"""

from dataclasses import dataclass

import numpy as np

# Below this angle the Rodrigues coefficients switch to their Taylor series.
EXP_TAYLOR_ANGLE = 1e-4
# trace(R) below -1 + this value selects the axis-extraction branch of log.
LOG_PI_TRACE_GAP = 1e-6
SKEW_TOL = 1e-8
ORTHO_TOL = 1e-10


def hat(v):
    """Cross-product matrix of a 3-vector (``hat(v) @ w == cross(v, w)``)."""
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def vee(M, tol=SKEW_TOL):
    """Inverse of :func:`hat`.

    Raises ``ValueError`` when ``M`` is not skew-symmetric to within ``tol``
    (Frobenius norm of ``M + M.T``).
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {M.shape}")
    if np.linalg.norm(M + M.T) > tol:
        raise ValueError("matrix is not skew-symmetric")
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def vee_skew(M):
    """``vee`` of the skew part ``(M - M.T) / 2`` without a skewness check."""
    return 0.5 * np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])


def _rodrigues_coeffs(theta):
    if theta < EXP_TAYLOR_ANGLE:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return a, b


def exp_so3(phi):
    """Rotation matrix ``expm(hat(phi))`` via the Rodrigues formula."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.sqrt(phi @ phi))
    a, b = _rodrigues_coeffs(theta)
    K = hat(phi)
    return np.eye(3) + a * K + b * (K @ K)


def exp_so3_batch(phis):
    """Vectorized :func:`exp_so3` for an ``(n, 3)`` array."""
    phis = np.asarray(phis, dtype=float).reshape(-1, 3)
    theta = np.sqrt(np.einsum("ij,ij->i", phis, phis))
    small = theta < EXP_TAYLOR_ANGLE
    t2 = theta * theta
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
                 (1.0 - np.cos(safe)) / (safe * safe))
    K = np.zeros((len(phis), 3, 3))
    K[:, 0, 1] = -phis[:, 2]
    K[:, 0, 2] = phis[:, 1]
    K[:, 1, 0] = phis[:, 2]
    K[:, 1, 2] = -phis[:, 0]
    K[:, 2, 0] = -phis[:, 1]
    K[:, 2, 1] = phis[:, 0]
    return np.eye(3) + a[:, None, None] * K + b[:, None, None] * (K @ K)


def log_so3(R):
    """Rotation vector of ``R`` with norm in ``[0, pi]``.

    Near the cut locus (angle close to pi) the axis is read off the
    symmetric part of ``R`` instead of dividing by ``sin(angle)``.
    """
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if tr < -1.0 + LOG_PI_TRACE_GAP:
        S = 0.5 * (R + R.T)
        # S = cos(th) I + (1 - cos(th)) a a^T; the largest diagonal gives a stable column
        c = np.clip(0.5 * (tr - 1.0), -1.0, 1.0)
        M = (S - c * np.eye(3)) / (1.0 - c)
        i = int(np.argmax(np.diag(M)))
        axis = M[:, i] / np.sqrt(max(M[i, i], 1e-300))
        axis /= np.linalg.norm(axis)
        s = 0.5 * (axis @ w)
        if s < 0.0:
            axis = -axis
            s = -s
        theta = np.arctan2(s, c)
        return theta * axis
    s = 0.5 * np.sqrt(w @ w)
    c = 0.5 * (tr - 1.0)
    theta = np.arctan2(s, c)
    if theta < 1e-6:
        # theta / sin(theta) = 1 + theta^2 / 6 + O(theta^4)
        return 0.5 * (1.0 + theta * theta / 6.0) * w
    return (0.5 * theta / s) * w


def adjoint_rot(R, xi):
    """Coordinates of ``Ad_R(hat(xi)) = R hat(xi) R^T``; for SO(3) this is ``R @ xi``."""
    return np.asarray(R, dtype=float) @ np.asarray(xi, dtype=float)


def bch2(a, b):
    """Second-order BCH: ``log(exp(a) exp(b)) ~ a + b + [a, b] / 2``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a + b + 0.5 * np.cross(a, b)


def orthonormality_defect(R):
    R = np.asarray(R, dtype=float)
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def project_to_so3(R):
    """Closest rotation in Frobenius norm (polar factor with det fixed to +1)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


def is_rotation(R, tol=1e-10):
    R = np.asarray(R, dtype=float)
    return (R.shape == (3, 3) and orthonormality_defect(R) <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


def random_rotation(rng, max_angle=np.pi):
    """Rotation with a uniformly random axis and angle uniform in ``[0, max_angle]``."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return exp_so3(rng.uniform(0.0, max_angle) * axis)


# so(3) bracket as a bilinear form: cross(a, b)[c] = a @ BRACKET[c] @ b
BRACKET = np.array([-hat(e) for e in np.eye(3)])


@dataclass(frozen=True)
class ChainExpansion:
    """Second-order expansion of ``log(Ybar^-1 X_1 exp(t xi_1) ... X_n exp(t xi_n))``.

    ``coeffs[i]`` maps ``xi_i`` to its first-order contribution
    (``Ad`` by the inverse tail product ``X_{i+1..n}``), and ``brackets``
    lists the transported vector pairs ``(a_i, a_j)``, ``i < j``, whose
    half-sum of cross products is the ``t**2`` coefficient.
    """

    coeffs: np.ndarray
    transported: np.ndarray
    brackets: tuple

    @property
    def first_order(self):
        return self.transported.sum(axis=0)

    @property
    def second_order(self):
        out = np.zeros(3)
        for a, b in self.brackets:
            out += np.cross(a, b)
        return 0.5 * out

    def hessian(self):
        """Symmetric Hessian blocks ``(3, 3n, 3n)`` with ``d @ H[c] @ d = sum_{i<j} cross(a_i, a_j)[c]``."""
        return chain_hessian(self.coeffs)


def chain_coeffs(operating_points):
    """Matrices ``X_{i+1..n}^T`` transporting each direction to the chain's end frame."""
    n = len(operating_points)
    coeffs = np.empty((n, 3, 3))
    tail = np.eye(3)
    for i in range(n - 1, -1, -1):
        coeffs[i] = tail.T
        tail = np.asarray(operating_points[i], dtype=float) @ tail
    return coeffs


def chain_hessian(coeffs):
    n = len(coeffs)
    H = np.zeros((3, 3 * n, 3 * n))
    for i in range(n):
        for j in range(i + 1, n):
            # 1/2 A_i^T K_c A_j for the upper block, mirrored below
            blk = 0.5 * np.einsum("ai,cab,bj->cij", coeffs[i], BRACKET, coeffs[j])
            H[:, 3 * i:3 * i + 3, 3 * j:3 * j + 3] = blk
            H[:, 3 * j:3 * j + 3, 3 * i:3 * i + 3] = np.transpose(blk, (0, 2, 1))
    return H


def chain_second_order(operating_points, directions):
    """BCH expansion of a perturbed kinematic chain at ``t = 0``.

    Parameters
    ----------
    operating_points : sequence of (3, 3) rotations ``X_1 .. X_n``
    directions : sequence of 3-vectors ``xi_1 .. xi_n`` (right perturbations)
    """
    if len(operating_points) < 1 or len(operating_points) != len(directions):
        raise ValueError("need one direction per operating point and n >= 1")
    coeffs = chain_coeffs(operating_points)
    a = np.einsum("nij,nj->ni", coeffs, np.asarray(directions, dtype=float).reshape(-1, 3))
    pairs = tuple((a[i], a[j]) for i in range(len(a)) for j in range(i + 1, len(a)))
    return ChainExpansion(coeffs=coeffs, transported=a, brackets=pairs)
