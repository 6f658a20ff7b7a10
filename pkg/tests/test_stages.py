import numpy as np
import pytest

from wavrelax.errors import ConvergenceError
from wavrelax.linalg import spectral_radius_estimate
from wavrelax.problem import LinearDAE, analytic_solution, build_paper_problem
from wavrelax.splittings import build_stage_splittings, make_stage_splittings
from wavrelax.stages import (ErrorBound, FixedIters, StageDepth, TimeLoopMode,
                             direct_euler, iteration_operator, wr_run)
from wavrelax.structured import combine, identity, zeros

TIGHT = ErrorBound(1e-10, 10000)


@pytest.fixture(scope="module")
def small():
    case = build_paper_problem(1, 3)
    return case, build_stage_splittings(case)


@pytest.fixture(scope="module")
def paper():
    case = build_paper_problem(50, 6)
    return case, build_stage_splittings(case)


def test_direct_euler_zero_dynamics():
    pr = LinearDAE(identity(1, 3), identity(1, 3, 2.0), lambda t: np.zeros(3), np.zeros(3))
    assert np.array_equal(direct_euler(pr).states, np.zeros((21, 3)))


def test_direct_euler_constant_when_B_vanishes():
    # B must be invertible for a problem record, so take a tiny B and zero forcing
    y0 = np.array([1.0, -2.0, 3.0])
    pr = LinearDAE(identity(1, 3), identity(1, 3, 1e-300), lambda t: np.zeros(3), y0, J=5)
    assert np.allclose(direct_euler(pr).states, np.tile(y0, (6, 1)), rtol=0, atol=1e-12)


def test_direct_euler_first_step_dense_oracle(small):
    case, _ = small
    pr = case.problem
    A, B = pr.A.to_dense(), pr.B.to_dense()
    expected = np.linalg.solve(A + 0.1 * B, A @ [1, 0, 0] + 0.1 * pr.forcing(0.1))
    assert np.allclose(direct_euler(pr).states[1], expected, rtol=0, atol=1e-14)


def test_trajectory_shape(small):
    case, s = small
    traj, _ = wr_run(case.problem, s, 1, TIGHT)
    assert len(traj) == 21
    assert np.array_equal(traj.states[0], case.problem.y0)
    assert np.allclose(traj.times, 0.1 * np.arange(21))


@pytest.mark.parametrize("pq", [(1, 3), (2, 3), (1, 6)])
@pytest.mark.parametrize("depth", list(StageDepth))
@pytest.mark.parametrize("mode", list(TimeLoopMode))
def test_fixed_point_matches_direct(pq, depth, mode):
    case = build_paper_problem(*pq)
    s = build_stage_splittings(case)
    traj, trace = wr_run(case.problem, s, depth, TIGHT, mode)
    ref = direct_euler(case.problem)
    assert np.max(np.abs(traj.states - ref.states)) <= 1e-8
    assert trace.factorizations == 1
    assert all(u <= TIGHT.tol for u in trace.update_norm)


def test_one_stage_paper_scale_matches_direct(paper):
    case, s = paper
    traj, trace = wr_run(case.problem, s, 1, ErrorBound(1e-3, 200))
    ref = direct_euler(case.problem)
    T = case.problem.T
    e_wr = np.linalg.norm(traj.states[-1] - analytic_solution(T, 300))
    e_ref = np.linalg.norm(ref.states[-1] - analytic_solution(T, 300))
    assert np.isfinite(e_wr)
    assert abs(e_wr - e_ref) <= 1e-3
    assert all(u <= 1e-3 for u in trace.update_norm)


def test_trivial_splitting_exact_in_one_sweep(small):
    case, _ = small
    pr = case.problem
    Z = zeros(1, 3)
    s = make_stage_splittings(pr.A, pr.B, Z, Z, pr.B, pr.B)
    ref = direct_euler(pr).states
    for depth in StageDepth:
        traj, _ = wr_run(pr, s, depth, FixedIters(1, 1, 1))
        assert np.max(np.abs(traj.states - ref)) <= 1e-12


@pytest.mark.parametrize("depth,K,nu,mu,expected", [
    (StageDepth.ONE, 20, 1, 1, {"block_thomas": 400}),
    (StageDepth.TWO, 5, 4, 1, {"diagonal": 400}),
    (StageDepth.THREE, 5, 2, 2, {"diagonal": 400}),
    (StageDepth.THREE, 3, 2, 4, {"diagonal": 480}),
])
def test_fixed_counts(paper, depth, K, nu, mu, expected):
    case, s = paper
    _, trace = wr_run(case.problem, s, depth, FixedIters(K, nu, mu))
    assert dict(trace.solves) == expected
    assert trace.outer == [K] * 20
    if depth >= StageDepth.TWO:
        assert trace.inner == [K * nu] * 20
    if depth is StageDepth.THREE:
        assert trace.innermost == [K * nu * mu] * 20


def test_windowed_counts(small):
    case, s = small
    _, trace = wr_run(case.problem, s, 3, FixedIters(2, 3, 2), TimeLoopMode.WINDOWED)
    assert sum(trace.solves.values()) == 20 * 2 * 3 * 2


def test_cap_raises_with_trace(paper):
    case, s = paper
    with pytest.raises(ConvergenceError) as info:
        wr_run(case.problem, s, 1, ErrorBound(1e-12, 3))
    assert info.value.trace is not None
    assert info.value.trace.solves["block_thomas"] == 3


def test_zero_steps(small):
    case, s = small
    pr = build_paper_problem(1, 3, J=0).problem
    for mode in TimeLoopMode:
        traj, _ = wr_run(pr, s, 2, TIGHT, mode)
        assert traj.states.shape == (1, 3)


def test_zero_operator():
    pr = build_paper_problem(1, 3).problem
    Z = zeros(1, 3)
    s = make_stage_splittings(pr.A, pr.B, Z, Z, pr.B, pr.B)
    op = iteration_operator(s, 1, 0.1)
    assert spectral_radius_estimate(op, 3) == 0.0


def test_depth_two_limit_is_depth_one(small):
    _, s = small
    one = iteration_operator(s, 1, 0.1)
    two = iteration_operator(s, 2, 0.1, nu=50)
    for v in np.eye(3):
        assert np.max(np.abs(one(v) - two(v))) <= 1e-8


def test_operator_matches_iteration_error(small):
    # the operator maps the outer error exactly
    case, s = small
    pr = case.problem
    h = 0.1
    ref = direct_euler(pr).states[1]
    op = iteration_operator(s, 3, h, nu=2, mu=2)
    traj, _ = wr_run(pr, s, 3, FixedIters(1, 2, 2))
    assert np.allclose(traj.states[1] - ref, op(pr.y0 - ref), rtol=0, atol=1e-13)


def test_paper_radii_below_one(paper):
    _, s = paper
    for depth, nu, mu in ((1, 1, 1), (2, 4, 1), (3, 2, 2)):
        r = spectral_radius_estimate(iteration_operator(s, depth, 0.1, nu, mu), 300)
        assert 0 < r < 1


def test_stopping_literal_on_paper(paper):
    case, s = paper
    for depth in StageDepth:
        _, trace = wr_run(case.problem, s, depth, ErrorBound(1e-3, 200))
        assert max(trace.update_norm) <= 1e-3


def test_first_order_in_h():
    errs = []
    for h, J in ((0.1, 20), (0.05, 40), (0.025, 80)):
        case = build_paper_problem(2, 6, h=h, J=J)
        pr = case.problem
        traj, _ = wr_run(pr, build_stage_splittings(case), 2, ErrorBound(1e-9, 10000))
        errs.append(max(np.max(np.abs(y - analytic_solution(t, case.m)))
                        for t, y in zip(traj.times, traj.states)))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(1.7 <= r <= 2.3 for r in ratios), ratios


def test_shifted_operators_combine(small):
    _, s = small
    lhs = combine(1.0, s.M_A, 0.1, s.M_3)
    assert np.allclose(np.diag(lhs.to_dense()), [2.0, 1.01, 1.0])
