import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lieripm.lie import (adjoint_rot, bch2, chain_coeffs, chain_hessian, chain_second_order,
                         exp_so3, exp_so3_batch, hat, is_rotation, log_so3,
                         orthonormality_defect, project_to_so3, random_rotation, vee)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=finite)


def series_exp(A, terms=30):
    out = np.eye(3)
    term = np.eye(3)
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out


def test_hat_examples():
    assert np.array_equal(hat(np.zeros(3)), np.zeros((3, 3)))
    assert np.array_equal(hat([1.0, 0.0, 0.0]), [[0, 0, 0], [0, 0, -1], [0, 1, 0]])


def test_hat_matches_componentwise_cross():
    rng = np.random.default_rng(0)
    for _ in range(50):
        v, w = rng.normal(size=(2, 3))
        cross = np.array([v[1] * w[2] - v[2] * w[1], v[2] * w[0] - v[0] * w[2],
                          v[0] * w[1] - v[1] * w[0]])
        assert np.allclose(hat(v) @ w, cross, atol=1e-14)


def test_vee_examples_and_errors():
    assert np.array_equal(vee(np.zeros((3, 3))), np.zeros(3))
    assert np.array_equal(vee(hat([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])
    M = np.zeros((3, 3))
    M[0, 1] = 1.0 / np.sqrt(2)
    M[1, 0] = 1.0 / np.sqrt(2)  # |M + M^T|_F = 1
    with pytest.raises(ValueError):
        vee(M)
    with pytest.raises(ValueError):
        vee(np.zeros((2, 2)))


@given(vec3)
def test_vee_hat_round_trip(v):
    assert np.array_equal(vee(hat(v)), v)
    H = hat(v)
    assert np.array_equal(H, -H.T)
    assert np.allclose(hat(vee(H)), H, atol=1e-12)


def test_exp_examples():
    assert np.array_equal(exp_so3(np.zeros(3)), np.eye(3))
    assert np.allclose(exp_so3([np.pi / 2, 0, 0]), [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-15)


def test_exp_matches_power_series():
    rng = np.random.default_rng(1)
    for _ in range(50):
        phi = rng.normal(size=3) * rng.uniform(0, 2)
        assert np.allclose(exp_so3(phi), series_exp(hat(phi)), atol=1e-12)
    for scale in (1e-3, 1e-5, 1e-8):  # small-angle branch
        phi = scale * rng.normal(size=3)
        assert np.allclose(exp_so3(phi), scipy.linalg.expm(hat(phi)), atol=1e-15)


def test_exp_batch_matches_single():
    rng = np.random.default_rng(2)
    phis = rng.normal(size=(20, 3)) * np.r_[np.full(10, 1e-6), np.ones(10)][:, None]
    assert np.allclose(exp_so3_batch(phis), [exp_so3(p) for p in phis], atol=1e-15)


@settings(max_examples=300)
@given(arrays(np.float64, 3, elements=st.floats(-10 / np.sqrt(3), 10 / np.sqrt(3))))
def test_exp_is_rotation(phi):
    assert is_rotation(exp_so3(phi))


@settings(max_examples=300)
@given(vec3)
def test_log_exp_identity_below_cut_locus(v):
    n = np.linalg.norm(v)
    if n > np.pi - 1e-3:
        v = v * (np.pi - 1e-3) / n
    assert np.linalg.norm(log_so3(exp_so3(v)) - v) <= 1e-10


def test_log_examples():
    assert np.array_equal(log_so3(np.eye(3)), np.zeros(3))
    v = np.array([0.3, -0.2, 0.1])
    assert np.allclose(log_so3(exp_so3(v)), v, atol=1e-14)
    R = np.diag([1.0, -1.0, -1.0])
    w = log_so3(R)
    assert np.isclose(abs(w[0]), np.pi) and np.allclose(w[1:], 0)
    assert np.allclose(exp_so3(w), R, atol=1e-12)


def test_log_near_pi_round_trip():
    rng = np.random.default_rng(3)
    for eps in (0.0, 1e-12, 1e-9, 1e-7, 1e-4):
        for _ in range(20):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            R = exp_so3((np.pi - eps) * axis)
            w = log_so3(R)
            assert np.linalg.norm(w) <= np.pi + 1e-12
            assert np.linalg.norm(exp_so3(w) - R) <= 1e-9


@settings(max_examples=300)
@given(st.integers(0, 2**32 - 1))
def test_exp_log_identity_all_rotations(seed):
    R = random_rotation(np.random.default_rng(seed))
    w = log_so3(R)
    assert np.linalg.norm(w) <= np.pi + 1e-12
    assert np.linalg.norm(exp_so3(w) - R) <= 1e-9


def test_log_matches_matrix_log():
    rng = np.random.default_rng(4)
    for _ in range(30):
        R = random_rotation(rng, max_angle=3.0)
        assert np.allclose(hat(log_so3(R)), np.real(scipy.linalg.logm(R)), atol=1e-10)


def test_adjoint():
    rng = np.random.default_rng(5)
    xi = rng.normal(size=3)
    assert np.array_equal(adjoint_rot(np.eye(3), xi), xi)
    for _ in range(20):
        R1, R2 = random_rotation(rng), random_rotation(rng)
        xi = rng.normal(size=3)
        assert np.allclose(hat(adjoint_rot(R1, xi)), R1 @ hat(xi) @ R1.T, atol=1e-14)
        assert np.allclose(adjoint_rot(R1 @ R2, xi), adjoint_rot(R1, adjoint_rot(R2, xi)), atol=1e-14)


def test_bch2_examples():
    a = np.array([0.3, -0.1, 0.2])
    assert np.array_equal(bch2(a, np.zeros(3)), a)
    e = 1e-3
    assert np.allclose(bch2([e, 0, 0], [0, e, 0]), [e, e, e * e / 2], rtol=0, atol=1e-18)


def bch_errors(rng, ks):
    a0, b0 = rng.normal(size=(2, 3))
    a0 /= np.linalg.norm(a0)
    b0 /= np.linalg.norm(b0)
    return [np.linalg.norm(log_so3(exp_so3(2.0 ** -k * a0) @ exp_so3(2.0 ** -k * b0))
                           - bch2(2.0 ** -k * a0, 2.0 ** -k * b0)) for k in ks]


def test_bch2_cubic_remainder():
    rng = np.random.default_rng(6)
    for _ in range(10):
        err = bch_errors(rng, range(2, 7))
        ratios = np.array(err[:-1]) / np.array(err[1:])
        assert np.all(np.abs(ratios - 8.0) <= 0.2 * 8.0), ratios


def test_projection_and_defect():
    rng = np.random.default_rng(7)
    R = random_rotation(rng)
    noisy = R + 1e-6 * rng.normal(size=(3, 3))
    assert orthonormality_defect(noisy) > 1e-8
    P = project_to_so3(noisy)
    assert is_rotation(P) and np.linalg.norm(P - R) < 1e-5
    assert not is_rotation(np.diag([1.0, 1.0, -1.0]))


def test_chain_trivial_cases():
    rng = np.random.default_rng(8)
    x1, x2 = rng.normal(size=(2, 3))
    ex = chain_second_order([random_rotation(rng)], [x1])
    assert np.array_equal(ex.coeffs[0], np.eye(3)) and ex.brackets == ()
    assert np.array_equal(ex.second_order, np.zeros(3))
    ex = chain_second_order([np.eye(3), np.eye(3)], [x1, x2])
    assert np.allclose(ex.first_order, x1 + x2)
    assert np.allclose(ex.second_order, 0.5 * np.cross(x1, x2))
    with pytest.raises(ValueError):
        chain_second_order([np.eye(3)], [x1, x2])


@given(vec3, st.lists(st.floats(-3, 3), min_size=2, max_size=5))
def test_chain_collinear_directions_have_no_bracket(v, scales):
    ex = chain_second_order([np.eye(3)] * len(scales), [s * v for s in scales])
    assert np.allclose(ex.second_order, 0.0, atol=1e-12)


def chain_curve(Xs, xis, t):
    Ybar = np.linalg.multi_dot(Xs) if len(Xs) > 1 else Xs[0]
    Y = np.eye(3)
    for X, xi in zip(Xs, xis):
        Y = Y @ X @ exp_so3(t * xi)
    return log_so3(Ybar.T @ Y)


def test_chain_matches_second_difference():
    rng = np.random.default_rng(9)
    for _ in range(20):
        Xs = [random_rotation(rng) for _ in range(3)]
        xis = rng.normal(size=(3, 3))
        ex = chain_second_order(Xs, xis)
        h = 1e-3
        fd1 = (chain_curve(Xs, xis, h) - chain_curve(Xs, xis, -h)) / (2 * h)
        fd2 = (chain_curve(Xs, xis, h) + chain_curve(Xs, xis, -h)) / (2 * h * h)
        assert np.allclose(fd1, ex.first_order, atol=1e-5)
        assert np.allclose(fd2, ex.second_order, atol=1e-4)
        d = xis.ravel()
        assert np.allclose(np.einsum("i,cij,j->c", d, ex.hessian(), d), 2 * ex.second_order)


def test_chain_second_order_cubic_remainder():
    rng = np.random.default_rng(10)
    Xs = [random_rotation(rng) for _ in range(3)]
    xis = rng.normal(size=(3, 3))
    ex = chain_second_order(Xs, xis)
    err = [np.linalg.norm(chain_curve(Xs, xis, t) - t * ex.first_order - t * t * ex.second_order)
           for t in 2.0 ** -np.arange(3, 8)]
    ratios = np.array(err[:-1]) / np.array(err[1:])
    assert np.all(np.abs(ratios - 8.0) <= 1.6), ratios


def test_chain_hessian_symmetric():
    rng = np.random.default_rng(11)
    H = chain_hessian(chain_coeffs([random_rotation(rng) for _ in range(4)]))
    assert np.allclose(H, np.transpose(H, (0, 2, 1)))
