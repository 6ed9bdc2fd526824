import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from markovbandit.core import TabularModel
from markovbandit.environments import (
    ConstrainedProblem,
    assemble_game,
    build_queue,
    build_static_example,
    shift_rewards,
)
from markovbandit.oracle import (
    CriterionMismatch,
    IterationBudgetExceeded,
    apply_T_average,
    apply_T_discounted,
    cmdp_lp_discounted,
    feasibility_value,
    fixed_point_discounted,
    maximin_backup,
    rvi_average,
    span,
)

EXAMPLE1 = assemble_game(build_static_example("example1"))
PENNIES_AVG = TabularModel(np.ones((1, 2, 1)), EXAMPLE1.R)


def random_model(rng, S=3, A=2, O=2, gamma=0.7):
    P = rng.dirichlet(np.ones(S), size=(S, A))
    return TabularModel(P, rng.uniform(-1, 1, (S, A, O)), gamma)


def value_iteration(P, r, gamma, tol=1e-12):
    """Plain MDP value iteration, returns Q[s, a]."""
    Q = np.zeros(r.shape)
    while True:
        new = r + gamma * P @ Q.max(axis=1)
        if np.abs(new - Q).max() < tol:
            return new
        Q = new


def test_T_of_zero_is_R():
    m = random_model(np.random.default_rng(0))
    np.testing.assert_array_equal(apply_T_discounted(m, np.zeros(m.shape)), m.R)


def test_example1_fixed_point():
    Q_star = np.array([[[1.0, -1.0], [-1.0, 1.0]]])
    np.testing.assert_allclose(apply_T_discounted(EXAMPLE1, Q_star), Q_star, atol=1e-12)
    Q, policy = fixed_point_discounted(EXAMPLE1)
    np.testing.assert_allclose(Q, Q_star, atol=1e-9)
    np.testing.assert_allclose(policy[0], [0.5, 0.5], atol=1e-9)


def test_example2_fixed_point():
    Q, policy = fixed_point_discounted(assemble_game(build_static_example("example2")))
    np.testing.assert_allclose(policy[0], [1 / 3] * 3, atol=1e-9)
    assert (policy[0] @ Q[0]).min() == pytest.approx(0, abs=1e-9)


def test_discounted_shift():
    m = random_model(np.random.default_rng(1))
    Q = np.random.default_rng(2).normal(size=m.shape)
    np.testing.assert_allclose(apply_T_discounted(m, Q + 3.0), apply_T_discounted(m, Q) + 0.7 * 3.0,
                               atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_single_opponent_is_value_iteration(seed):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(5), size=(5, 3))
    r = rng.uniform(-1, 1, (5, 3))
    Q, _ = fixed_point_discounted(TabularModel(P, r[:, :, None], 0.8), tol=1e-10)
    np.testing.assert_allclose(Q[:, :, 0], value_iteration(P, r, 0.8), atol=1e-9)


def test_criterion_checks():
    with pytest.raises(CriterionMismatch):
        apply_T_discounted(PENNIES_AVG, np.zeros((1, 2, 2)))
    with pytest.raises(CriterionMismatch):
        rvi_average(EXAMPLE1)
    with pytest.raises(IterationBudgetExceeded):
        fixed_point_discounted(random_model(np.random.default_rng(0)), budget=3)


def test_average_operator_at_zero():
    # one successor and Q = 0: every row of the game is R(s,a,.) itself, so pi is
    # irrelevant and each entry is R minus f
    out = apply_T_average(PENNIES_AVG, np.zeros((1, 2, 2)), 0.25)
    np.testing.assert_allclose(out, PENNIES_AVG.R - 0.25)


def test_average_operator_by_hand():
    # from a=0 the game rows are R(0,.) + Q[a+] = [[1, -0.5], [1.5, -1]]; column 1
    # binds for every pi and is largest at pi = (1, 0). Symmetrically pi = (0, 1) from a=1.
    Q = np.array([[[0.0, 0.5], [0.5, 0.0]]])
    out = apply_T_average(PENNIES_AVG, Q, 0.2)
    np.testing.assert_allclose(out[0], np.array([[1.0, -0.5], [-0.5, 1.0]]) - 0.2, atol=1e-12)


def test_average_shift():
    m = TabularModel(random_model(np.random.default_rng(3)).P, np.random.default_rng(4).normal(
        size=(3, 2, 2)))
    Q = np.random.default_rng(5).normal(size=m.shape)
    np.testing.assert_allclose(apply_T_average(m, Q + 1.5, 0.0), apply_T_average(m, Q, 0.0) + 1.5,
                               atol=1e-9)


def test_rvi_matching_pennies():
    sol = rvi_average(PENNIES_AVG)
    np.testing.assert_allclose(sol.v_star, 0, atol=1e-8)
    np.testing.assert_allclose(sol.policy[0], [0.5, 0.5], atol=1e-8)


def test_rvi_uncontrolled_rewards():
    P1 = np.array([[0.2, 0.8], [0.6, 0.4]])
    P = np.repeat(P1[:, None], 2, axis=1)
    R = np.repeat(np.repeat(np.array([1.0, -2.0])[:, None, None], 2, axis=1), 3, axis=2)
    sol = rvi_average(TabularModel(P, R))
    stationary = np.array([0.6, 0.8]) / 1.4
    np.testing.assert_allclose(sol.v_star, stationary @ [1.0, -2.0], atol=1e-8)


def test_rvi_residual_single_opponent():
    rng = np.random.default_rng(8)
    m = TabularModel(rng.dirichlet(np.ones(3), size=(3, 2)), rng.uniform(-1, 1, (3, 2, 1)))
    sol = rvi_average(m, tol=1e-10)
    assert sol.residual <= 1e-8
    np.testing.assert_allclose(sol.H_star, np.einsum("sa,sao->so", sol.policy, sol.Q_star))


def test_lp_queue_value_against_scipy():
    problem = build_queue()
    ours = cmdp_lp_discounted(problem)
    g, (S, A) = problem.gamma, problem.P.shape[:2]
    A_eq = np.zeros((S, S * A))
    for t in range(S):
        A_eq[t, t * A:(t + 1) * A] += 1
        A_eq[t] -= g * problem.P[:, :, t].ravel()
    b_eq = np.zeros(S)
    b_eq[0] = 1 - g
    A_ub = -problem.rewards.reshape(2, -1) / (1 - g)
    ref = linprog(-problem.objective.ravel() / (1 - g), A_ub=A_ub, b_ub=[0, 0], A_eq=A_eq,
                  b_eq=b_eq, method="highs")
    assert ours.value == pytest.approx(-ref.fun, abs=1e-8)
    assert ours.value == pytest.approx(9.7808, abs=1e-4)  # frozen from the run above
    assert ours.occupancy.sum() == pytest.approx(1, abs=1e-9)
    np.testing.assert_allclose(ours.policy.sum(axis=1), 1)


def test_lp_example2_policy():
    sol = cmdp_lp_discounted(build_static_example("example2"))
    assert sol.feasible and sol.value is None
    np.testing.assert_allclose(sol.policy[0], [1 / 3] * 3, atol=1e-9)


def test_lp_without_constraints():
    q = build_queue()
    free = ConstrainedProblem(q.P, q.objective, q.gamma)
    sol = cmdp_lp_discounted(free, objective_index=0)
    assert sol.feasible and sol.occupancy.sum() == pytest.approx(1, abs=1e-9)
    best = value_iteration(q.P, q.objective, q.gamma)[0].max()
    assert sol.value == pytest.approx(best, abs=1e-8)


def test_lp_reports_infeasible():
    assert not cmdp_lp_discounted(shift_rewards(build_queue(), 12.0)).feasible


def test_feasibility_values():
    assert feasibility_value(EXAMPLE1) == pytest.approx(0, abs=1e-9)
    assert feasibility_value(assemble_game(build_static_example("example2"))) == pytest.approx(
        0, abs=1e-9)
    ones = TabularModel(np.ones((1, 2, 1)), np.ones((1, 2, 3)), 0.5)
    assert feasibility_value(ones) == pytest.approx(2.0)
    assert feasibility_value(TabularModel(np.ones((1, 2, 1)), np.ones((1, 2, 3)))) == \
        pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 0.9, None]))
def test_maximin_backup_nonexpansive(seed, gamma):
    rng = np.random.default_rng(seed)
    m = random_model(rng, gamma=gamma)
    Q1, Q2 = rng.normal(size=m.shape) * 3, rng.normal(size=m.shape) * 3
    d = np.abs(Q1 - Q2).max()
    factor = 1.0 if gamma is None else gamma
    gap = maximin_backup(m, Q1, 0.0) - maximin_backup(m, Q2, 0.0)
    assert np.abs(gap).max() <= factor * d + 1e-9
    assert span(gap) <= factor * span(Q1 - Q2) + 1e-9
