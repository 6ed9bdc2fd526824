import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from markovbandit.core import TabularModel
from markovbandit.environments import ConstrainedProblem, build_queue, build_static_example
from markovbandit.evaluation import (
    BracketInvalid,
    ConstraintEstimate,
    Verdict,
    bisect_delta,
    feasibility_verdict,
    mc_constraint_values,
    simulate_returns,
    truncation_horizon,
)
from markovbandit.oracle import cmdp_lp_discounted, lp_feasible_at


def est(mean, hw=0.1):
    return ConstraintEstimate(mean, hw, 100, 10)


def test_horizon_examples():
    assert truncation_horizon(0.5, 10, 1e-3) == 15
    assert truncation_horizon(0.5, 1, 5.0) == 1
    hs = [truncation_horizon(g, 1.0, 1e-3) for g in np.linspace(0.1, 0.95, 30)]
    assert all(a <= b for a, b in zip(hs, hs[1:]))
    with pytest.raises(ValueError):
        truncation_horizon(1.0, 1, 1e-3)


@given(st.floats(0.05, 0.99), st.floats(0.01, 100), st.floats(1e-6, 1))
def test_horizon_is_smallest(gamma, c, tol):
    H = truncation_horizon(gamma, c, tol)
    bound = c / (1 - gamma)
    assert gamma ** H * bound <= tol
    assert H == 1 or gamma ** (H - 1) * bound > tol


def test_geometric_series_bracket():
    m = TabularModel(np.ones((1, 1, 1)), np.ones((1, 1, 1)), 0.5)
    (e,) = mc_constraint_values(m, np.ones((1, 1)), n_traj=50, tol=1e-3)
    assert 2 - 1e-3 <= e.mean <= 2
    assert e.half_width == pytest.approx(1e-3)


def test_example2_uniform_policy_meets_targets():
    problem = build_static_example("example2", target=0.0)  # unshifted r_j(a) = [a == j] / 2
    ests = mc_constraint_values(problem, np.full((1, 3), 1 / 3), n_traj=100_000, seed=3)
    for e in ests:
        assert abs(e.mean - 1 / 3) <= e.half_width
        assert e.n_trajectories == 100_000 and e.horizon == truncation_horizon(0.5, 0.5, 1e-3)


def test_queue_half_width_at_ten_thousand():
    problem = build_queue()
    policy = cmdp_lp_discounted(problem).policy
    ests = mc_constraint_values(problem, policy, n_traj=10_000, seed=0)
    assert len(ests) == 2 and all(e.half_width <= 0.1 for e in ests)


def test_deterministic_and_batch_independent():
    q = build_queue()
    policy = np.full(q.P.shape[:2], 1 / 20)
    args = (q.P, q.rewards, policy, q.gamma, 0)
    a = simulate_returns(*args, 40, 12, seed=5)
    assert np.array_equal(a, simulate_returns(*args, 40, 12, seed=5))
    assert np.array_equal(a[:15], simulate_returns(*args, 15, 12, seed=5))
    assert not np.array_equal(a, simulate_returns(*args, 40, 12, seed=6))


def test_average_mode_time_average():
    problem = ConstrainedProblem(np.ones((1, 2, 1)), np.array([[[1.0, 3.0]]]), None)
    (e,) = mc_constraint_values(problem, np.array([[0.5, 0.5]]), n_traj=20, horizon=500)
    assert e.horizon == 500 and abs(e.mean - 2.0) <= e.half_width + 0.1


def test_verdict_examples():
    assert feasibility_verdict([est(0.3), est(0.3)]) is Verdict.FEASIBLE
    assert feasibility_verdict([est(0.3), est(-0.5)]) is Verdict.INFEASIBLE
    assert feasibility_verdict([est(0.3), est(-0.07)]) is Verdict.INCONCLUSIVE
    assert feasibility_verdict([est(-1e-12)], margin=0.0) is Verdict.INCONCLUSIVE
    with pytest.raises(ValueError):
        feasibility_verdict([])


ORDER = {Verdict.INFEASIBLE: 0, Verdict.INCONCLUSIVE: 1, Verdict.FEASIBLE: 2}


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(0.001, 1)), min_size=1, max_size=4),
       st.floats(0, 1))
def test_verdict_monotone(pairs, lift):
    before = feasibility_verdict([est(m, h) for m, h in pairs])
    after = feasibility_verdict([est(m + lift, h) for m, h in pairs])
    assert ORDER[after] >= ORDER[before]


def threshold_solver(boundary, band=0.0):
    def solve(delta):
        if delta <= boundary - band:
            return Verdict.FEASIBLE
        return Verdict.INFEASIBLE if delta > boundary + band else Verdict.INCONCLUSIVE
    return solve


def test_bisect_synthetic():
    delta, history = bisect_delta(threshold_solver(3.3), 0.0, 10.0, 0.01)
    assert abs(delta - 3.3) <= 0.01
    assert history[0] == (0.0, Verdict.FEASIBLE) and history[1] == (10.0, Verdict.INFEASIBLE)


def test_bisect_inconclusive_moves_down():
    delta, _ = bisect_delta(threshold_solver(5.0, band=1.0), 0.0, 10.0, 0.01)
    assert 3.99 <= delta <= 4.01


def test_bisect_bracket_checks():
    with pytest.raises(BracketInvalid):
        bisect_delta(threshold_solver(5.0), 0.0, 1.0)
    with pytest.raises(BracketInvalid):
        bisect_delta(threshold_solver(-1.0), 0.0, 1.0)
    with pytest.raises(BracketInvalid):
        bisect_delta(threshold_solver(0.5), 1.0, 0.0)


def test_bisect_queue_with_lp():
    def solve(delta):
        return Verdict.FEASIBLE if lp_feasible_at(build_queue(), delta) else Verdict.INFEASIBLE
    delta, history = bisect_delta(solve, 9.0, 10.0, 0.01)
    # frozen: the LP optimum of the queue is 9.7808
    assert abs(delta - 9.7808) <= 0.01
    assert len(history) == 2 + 7
