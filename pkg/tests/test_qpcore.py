import numpy as np
import pytest
from hypothesis import given, strategies as st

from flowmarket.qpcore import (INFEASIBLE, OPTIMAL, UNBOUNDED, ConvexProgram, SolverError,
                               brute_force_qp, kkt_residuals, lagrangian_dual_value,
                               max_slack_lp, solve, solve_or_raise)


def square_above_one():
    return ConvexProgram([2.0], [0.0], A_ineq=[[-1.0]], b_ineq=[-1.0])


def test_square_with_lower_constraint():
    rep = solve(square_above_one())
    assert rep.status == OPTIMAL
    assert rep.primal[0] == pytest.approx(1.0, abs=1e-9)
    assert rep.dual_ineq[0] == pytest.approx(2.0, abs=1e-8)
    assert rep.kkt.worst() <= 1e-8


def test_vacuous_objective_equality():
    rep = solve(ConvexProgram([0.0], [0.0], A_eq=[[1.0]], b_eq=[5.0]))
    assert rep.primal[0] == pytest.approx(5.0)
    assert rep.dual_eq[0] == pytest.approx(0.0, abs=1e-9)


def degenerate_pair():
    # max sum(-0.5 x^2 + theta2 x) s.t. sum x = 2, x >= 0 with theta2 = (4, 2)
    return ConvexProgram([1.0, 1.0], [-4.0, -2.0], A_eq=[[1.0, 1.0]], b_eq=[2.0],
                         lower=[0.0, 0.0], upper=[2.0, 2.0])


def test_degenerate_optimum_exact():
    rep = solve(degenerate_pair())
    np.testing.assert_allclose(rep.primal, [2.0, 0.0], atol=1e-9)


def test_grid_oracle_examples():
    bf = brute_force_qp(degenerate_pair(), 0.01)
    np.testing.assert_allclose(bf.primal, [2.0, 0.0], atol=0.01)
    p = ConvexProgram([2.0], [0.0], A_ineq=[[-1.0]], b_ineq=[-1.0], lower=[-3.0], upper=[3.0])
    assert 0.99 <= brute_force_qp(p, 0.01).primal[0] <= 1.01
    flat = ConvexProgram([0.0, 0.0], [0.0, 0.0], constant=3.0, lower=[0, 0], upper=[1, 1])
    assert brute_force_qp(flat).objective_value == 3.0


def test_oracle_requires_boxes():
    with pytest.raises(ValueError):
        brute_force_qp(ConvexProgram([1.0], [0.0]))


def test_exact_kkt_point_has_zero_residual():
    r = kkt_residuals(square_above_one(), [1.0], [], [2.0])
    assert r.worst() == 0.0


@pytest.mark.parametrize("delta", [1e-6, 1e-4, 1e-2])
def test_stationarity_residual_tracks_perturbation(delta):
    # perturb along the active constraint's normal, dual held fixed
    r = kkt_residuals(square_above_one(), [1.0 + delta], [], [2.0])
    assert r.stationarity == pytest.approx(2 * delta, rel=1e-6)


def test_infeasible_point_reports_primal_violation():
    r = kkt_residuals(square_above_one(), [0.3], [], [0.0])
    assert r.primal_ineq == pytest.approx(0.7)
    assert not r.ok(1e-6)


def test_status_classification():
    infeasible = ConvexProgram([0.0], [0.0], A_ineq=[[1.0], [-1.0]], b_ineq=[0.0, -1.0])
    assert solve(infeasible).status == INFEASIBLE
    unbounded = ConvexProgram([0.0], [-1.0], lower=[0.0])
    assert solve(unbounded).status == UNBOUNDED
    with pytest.raises(SolverError):
        solve_or_raise(unbounded)


@given(st.integers(0, 2**31), st.integers(1, 5), st.integers(0, 3))
def test_random_strictly_convex_programs(seed, nv, neq):
    rng = np.random.default_rng(seed)
    H = rng.uniform(0.1, 3.0, nv)
    c = rng.normal(size=nv)
    neq = min(neq, nv - 1)
    z0 = rng.uniform(0.2, 0.8, nv)
    Aeq = rng.normal(size=(neq, nv))
    G = rng.normal(size=(3, nv))
    p = ConvexProgram(H, c, A_eq=Aeq, b_eq=Aeq @ z0, A_ineq=G, b_ineq=G @ z0 + 0.1,
                      lower=np.zeros(nv), upper=np.ones(nv))
    rep = solve(p)
    assert rep.status == OPTIMAL
    assert rep.kkt.worst() <= 1e-7
    # strong duality on an exactly solved program
    assert lagrangian_dual_value(p, rep) == pytest.approx(rep.objective_value, abs=1e-6)
    assert rep.objective_value <= p.objective(z0) + 1e-9


def test_restarts_agree():
    p = degenerate_pair()
    zs = [solve(p, seed=s).primal for s in range(5)]
    assert max(np.abs(z - zs[0]).max() for z in zs) <= 1e-9


def test_max_slack_examples():
    A = np.array([[1.0, -1.0], [-1.0, 1.0]])
    r = max_slack_lp(A, [0.0, 0.0], [1.0, 1.0])
    assert r.t == pytest.approx(0.5, abs=1e-7)
    np.testing.assert_allclose(r.y, [0.5, 0.5], atol=1e-7)
    single = np.array([[1.0], [-1.0]])
    edge = max_slack_lp(single, [1.0, -1.0], [1.0])
    assert edge.t == pytest.approx(0.0, abs=1e-7) and edge.feasible
    out = max_slack_lp(single, [2.0, -2.0], [1.0])
    assert out.t < 0 and not out.feasible
