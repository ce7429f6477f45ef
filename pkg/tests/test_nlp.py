import numpy as np
import pytest
import scipy.sparse as sp
from conftest import LinearBlock, eq_toy, ineq_toy, scalar_problem

from lieripm.constraints import BoxBlock, InitialVecBlock, ObstacleBlock
from lieripm.costs import QuadCostBlock
from lieripm.lie import exp_so3, random_rotation
from lieripm.nlp import (InvalidStateError, NLPProblem, SingularKKTError, VariableLayout,
                         assemble, error_metrics, full_residual, kkt_envelope_violations,
                         metrics_from_residuals, replay_E0, retract, scaling, solve_newton)
from lieripm.ripm import SolverOptions, initial_state
from lieripm.scenarios import ScenarioConfig, build_multibody, drone_docking, serial_chain


def small_drone(scenario="docking-constrained", N=4, seed=3):
    return drone_docking(ScenarioConfig(scenario=scenario, N=N, seed=seed))


def test_layout_offsets_and_lookup():
    L = VariableLayout()
    a = L.add_rot("R", 0, (0,))
    b = L.add_vec("p", 3, 0, (0,))
    c = L.add_vec("u", 1, 1)
    assert [s.offset for s in L.slots] == [0, 3, 6] and L.n == 7
    assert L.find("p", 0, (0,)) == b and np.array_equal(L.indices(c), [6])
    with pytest.raises(ValueError):
        L.add_rot("R", 0, (0,))
    with pytest.raises(ValueError):
        L.add_vec("w", 0)
    x = L.zero_point()
    assert np.array_equal(x[a], np.eye(3)) and np.array_equal(x[b], np.zeros(3))


def test_retract_examples():
    L = VariableLayout()
    L.add_rot("R")
    L.add_vec("p", 3)
    rng = np.random.default_rng(0)
    x = L.zero_point()
    x[0], x[1] = random_rotation(rng), rng.normal(size=3)
    y = retract(L, x, np.zeros(L.n))
    assert np.array_equal(y.rots, x.rots) and np.array_equal(y.vec, x.vec)
    z = retract(L, L.zero_point(), np.r_[np.pi / 2, 0, 0, 1, 2, 3])
    assert np.allclose(z[0], exp_so3([np.pi / 2, 0, 0]), atol=1e-15)
    assert np.array_equal(z[1], [1, 2, 3])
    d = rng.normal(size=L.n)
    w = retract(L, x, d)
    assert np.allclose(w[0], x[0] @ exp_so3(d[:3]), atol=1e-12)
    with pytest.raises(ValueError):
        retract(L, x, np.zeros(L.n + 1))


def test_retract_keeps_rotations_orthonormal():
    L = VariableLayout()
    L.add_rot("R")
    rng = np.random.default_rng(1)
    x = L.zero_point()
    for _ in range(500):
        x = retract(L, x, rng.normal(size=3))
    assert np.linalg.norm(x[0].T @ x[0] - np.eye(3)) <= 1e-10


def test_jacobian_and_gradient_match_fd():
    dp = small_drone()
    P, x = dp.problem, dp.x0
    rng = np.random.default_rng(2)
    ev = P.evaluate(x, order=1)
    for _ in range(5):
        d = rng.normal(size=P.n)
        h = 1e-6
        ep, em = P.evaluate(P.retract(x, h * d), 0), P.evaluate(P.retract(x, -h * d), 0)
        assert np.allclose((ep.h - em.h) / (2 * h), ev.JE @ d, atol=1e-6 * max(1, np.abs(ev.JE @ d).max()))
        assert np.allclose((ep.g - em.g) / (2 * h), ev.JI @ d, atol=1e-6 * max(1, np.abs(ev.JI @ d).max()))
        assert np.isclose((ep.f - em.f) / (2 * h), ev.grad @ d, rtol=1e-6)


def test_shared_rows_are_summed():
    P = scalar_problem()
    rows = P.add_eq(InitialVecBlock((0,), [1.0]))
    P.add_eq(InitialVecBlock((0,), [2.0]), rows=rows)
    x = P.layout.zero_point()
    ev = P.evaluate(x, 1)
    assert P.l == 1 and np.allclose(ev.h, [-3.0]) and np.allclose(ev.JE.toarray(), [[2.0]])
    with pytest.raises(ValueError):
        P.add_eq(InitialVecBlock((0,), [1.0]), rows=[5])


def test_lagrangian_hessian_symmetric_and_deterministic():
    dp = small_drone()
    P, x = dp.problem, dp.x0
    rng = np.random.default_rng(3)
    ev = P.evaluate(x, 2)
    y, z = rng.normal(size=P.l), rng.uniform(0.1, 1, size=P.m)
    H = P.lagrangian_hessian(ev, y, z)
    assert abs(H - H.T).max() <= 1e-12
    s = rng.uniform(0.1, 1, size=P.m)
    A = assemble(P, x, y, z, s, 0.1)
    B = assemble(P, x, y, z, s, 0.1)
    for M1, M2 in ((A.H, B.H), (A.AE, B.AE), (A.AI, B.AI)):
        assert np.array_equal(M1.indptr, M2.indptr) and np.array_equal(M1.indices, M2.indices)
        assert np.array_equal(M1.data, M2.data)


def test_assemble_errors():
    P, x = ineq_toy()
    with pytest.raises(InvalidStateError):
        assemble(P, x, np.zeros(0), np.ones(1), np.zeros(1), 0.1)
    with pytest.raises(InvalidStateError):
        assemble(P, x, np.zeros(0), np.ones(2), np.ones(2), 0.1)


def test_unconstrained_quadratic_newton():
    L = VariableLayout()
    L.add_vec("x", 3)
    P = NLPProblem(L)
    rng = np.random.default_rng(4)
    A = rng.normal(size=(3, 3))
    W = A @ A.T + np.eye(3)
    target = rng.normal(size=3)
    P.add_cost(QuadCostBlock((0,), target, W))
    x = L.zero_point()
    sysm = assemble(P, x, np.zeros(0), np.zeros(0), np.zeros(0), 0.1)
    d = solve_newton(sysm)
    assert np.allclose(sysm.H.toarray() @ d.dx, -sysm.r_d)
    assert np.allclose(d.dx, target)
    # identity Hessian: d_x = -gradient
    P2 = NLPProblem(L)
    P2.add_cost(QuadCostBlock((0,), target, np.eye(3)))
    s2 = assemble(P2, x, np.zeros(0), np.zeros(0), np.zeros(0), 0.1)
    assert np.allclose(solve_newton(s2).dx, -s2.r_d)


def test_linear_equality_row():
    L = VariableLayout()
    L.add_vec("x", 2)
    P = NLPProblem(L)
    P.add_cost(QuadCostBlock((0,), np.zeros(2), np.eye(2)))
    P.add_eq(LinearBlock((0,), [3.0, -1.0], 2.0))
    ev = P.evaluate(L.zero_point(), 1)
    assert np.array_equal(ev.JE.toarray(), [[3.0, -1.0]])


def test_newton_direction_vanishes_at_toy_solution():
    P, x = ineq_toy(1.0 + 1e-9)
    for mu in (1e-4, 1e-8, 1e-12):
        s = np.array([mu / 2.0 + 1e-9])
        sysm = assemble(P, x, np.zeros(0), np.array([2.0]), s, mu)
        d = solve_newton(sysm)
        assert max(abs(d.dx[0]), abs(d.dz[0]), abs(d.ds[0])) <= 10 * mu + 1e-8


def test_full_and_reduced_directions_agree():
    dp = small_drone()
    P, x = dp.problem, dp.x0
    rng = np.random.default_rng(5)
    ev = P.evaluate(x, 2)
    st = initial_state(P, x, SolverOptions(), ev)
    y = rng.normal(size=P.l)
    sysm = assemble(P, x, y, st.z, st.s, st.mu, ev)
    d = solve_newton(sysm)
    assert d.residual <= 1e-10
    assert full_residual(sysm, d) <= 1e-10
    K = sysm.full_matrix()
    dense = np.linalg.solve(K.toarray(), sysm.rhs)
    ours = np.concatenate([d.dx, d.dy, d.dz, d.ds])
    assert np.max(np.abs(dense - ours)) <= 1e-10 * max(1, np.max(np.abs(dense)))
    assert np.allclose(sysm.AI @ d.dx + d.ds, -(ev.g + st.s), atol=1e-12)


def test_random_system_residual():
    rng = np.random.default_rng(6)
    for seed in range(3):
        dp = small_drone(seed=seed)
        P, x = dp.problem, dp.x0
        ev = P.evaluate(x, 2)
        z, s = rng.uniform(0.1, 2, size=P.m), rng.uniform(0.1, 2, size=P.m)
        sysm = assemble(P, x, rng.normal(size=P.l), z, s, 0.05, ev)
        d = solve_newton(sysm)
        assert full_residual(sysm, d) <= 1e-10


def test_singular_system_reports_pivot():
    P = scalar_problem()
    rows = P.add_eq(InitialVecBlock((0,), [1.0]))
    P.add_eq(InitialVecBlock((0,), [1.0]))  # duplicate row
    x = P.layout.zero_point()
    sysm = assemble(P, x, np.zeros(2), np.zeros(0), np.zeros(0), 0.1)
    with pytest.raises(SingularKKTError) as exc:
        solve_newton(sysm)
    assert exc.value.pivot >= 0
    assert len(rows) == 1


def test_regularization_recovers_singular_hessian():
    L = VariableLayout()
    L.add_vec("x", 2)
    P = NLPProblem(L)
    P.add_cost(QuadCostBlock((0,), np.ones(2), np.diag([1.0, 0.0])))
    sysm = assemble(P, L.zero_point(), np.zeros(0), np.zeros(0), np.zeros(0), 0.1)
    with pytest.raises(SingularKKTError):
        solve_newton(sysm)
    d = solve_newton(sysm, regularize=True)
    assert d.delta_w > 0 and np.isfinite(d.dx).all()


def test_error_metrics_examples():
    P, x = eq_toy(1.0)
    m = error_metrics(P, x, np.array([-2.0]), np.zeros(0), np.zeros(0), 0.0)
    assert m.E_0 == 0.0 and m.E_mu == 0.0
    m = metrics_from_residuals(np.zeros(2), np.array([0.5, -0.2]), np.zeros(2), np.zeros(0), np.zeros(0), 0.1)
    assert m.eps_E == 0.5


def test_error_metrics_recomputation():
    rng = np.random.default_rng(7)
    dp = small_drone()
    P, x = dp.problem, dp.x0
    ev = P.evaluate(x, 1)
    y, z, s = rng.normal(size=P.l) * 300, rng.uniform(0, 5, P.m), rng.uniform(0.1, 1, P.m)
    mu = 0.03
    m = error_metrics(P, x, y, z, s, mu, ev)
    s_d = max(100.0, (np.abs(y).sum() + np.abs(z).sum()) / (P.l + P.m)) / 100.0
    s_c = max(100.0, np.abs(z).sum() / P.m) / 100.0
    r_d = ev.grad + ev.JE.toarray().T @ y + ev.JI.toarray().T @ z
    eps_KKT = np.abs(r_d).max() / s_d
    eps_E = np.abs(ev.h).max()
    assert np.isclose(m.eps_KKT, eps_KKT, rtol=1e-12)
    assert np.isclose(m.E_mu, max(eps_KKT, eps_E, np.abs(s * z - mu).max() / s_c), rtol=1e-12)
    assert np.isclose(m.E_0, max(eps_KKT, eps_E, np.abs(s * z).max() / s_c), rtol=1e-12)
    assert abs(replay_E0(m.kkt_inf, m.eps_E, m.comp_0_inf, m.s_d, m.s_c) - m.E_0) <= 1e-12
    assert scaling(np.zeros(0), np.zeros(0)) == (1.0, 1.0)


def chain_problem(N=5, bodies=3):
    mb = build_multibody(serial_chain(bodies), N, 0.05, q_goal=np.full(bodies, 0.4),
                         obstacles=((0.3, 0.2, 0.1),))
    return mb


def test_kkt_envelope_three_body_chain():
    mb = chain_problem()
    P = mb.problem
    rng = np.random.default_rng(8)
    ev = P.evaluate(mb.x0, 2)
    sysm = assemble(P, mb.x0, rng.normal(size=P.l), np.ones(P.m), np.ones(P.m), 0.1, ev)
    assert kkt_envelope_violations(P, sysm, mb.couplings) == 0


def test_kkt_envelope_detects_leakage():
    mb = chain_problem()
    P = mb.problem
    # one row touching stage 3 of body 0 and stage 0 of body 2 breaks the banded envelope
    rows = P.add_eq(LinearBlock((mb.slots["p"][3, 0],), [1.0, 0.0, 0.0], 0.0))
    P.add_eq(LinearBlock((mb.slots["p"][0, 2],), [1.0, 0.0, 0.0], 0.0), rows=rows)
    ev = P.evaluate(mb.x0, 2)
    sysm = assemble(P, mb.x0, np.zeros(P.l), np.ones(P.m), np.ones(P.m), 0.1, ev)
    assert kkt_envelope_violations(P, sysm, mb.couplings) > 0


def test_manipulator_variable_count():
    N = 3
    mb = build_multibody(serial_chain(7), N, 0.05)
    assert mb.problem.n == (N + 1) * 7 * 12 + N * 42
    # per joint and step 3 pivot + 2 axis rows
    n_joint_rows = sum(b.dim for b, _ in mb.problem.eq if b.family in ("pivot", "axis"))
    assert n_joint_rows == N * 7 * 5


def test_obstacle_rows_are_inequalities():
    mb = chain_problem(N=2)
    assert mb.problem.m == 2 * 3
    assert all(isinstance(b, ObstacleBlock) for b, _ in mb.problem.ineq)
    assert sp.issparse(mb.problem.evaluate(mb.x0, 1).JI)


def test_large_barrier_weight_is_not_singular():
    # z / s = 1e14 on an almost active bound next to an O(1) Hessian entry
    L = VariableLayout()
    L.add_vec("x", 2)
    P = NLPProblem(L)
    P.add_cost(QuadCostBlock((0,), np.zeros(2), 1e-3 * np.eye(2)))
    P.add_ineq(BoxBlock((0,), [1.0, -np.inf], [np.inf, np.inf]))
    x = L.zero_point()
    x.vec[:] = [1.0, 0.0]
    sysm = assemble(P, x, np.zeros(0), np.ones(1), np.full(1, 1e-14), 1e-12)
    d = solve_newton(sysm)
    assert full_residual(sysm, d) <= 1e-10


def test_singular_pivot_names_dependent_column():
    L = VariableLayout()
    L.add_vec("x", 3)
    P = NLPProblem(L)
    P.add_cost(QuadCostBlock((0,), np.zeros(3), np.diag([1.0, 1.0, 0.0])))
    sysm = assemble(P, L.zero_point(), np.zeros(0), np.zeros(0), np.zeros(0), 0.1)
    with pytest.raises(SingularKKTError) as exc:
        solve_newton(sysm)
    assert exc.value.pivot == 2
