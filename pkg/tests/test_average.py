import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from markovbandit.average import (
    AverageLearner,
    DivergenceError,
    beta_schedule,
    f_mean,
    run_average,
)
from markovbandit.core import TabularModel
from markovbandit.oracle import rvi_average, span

PENNIES = TabularModel(np.ones((1, 2, 1)), np.array([[[1.0, -1.0], [-1.0, 1.0]]]))
SKEWED = np.array([[[1.0, 0.2], [-0.5, 0.7]]])
TWO_STATE = TabularModel(np.array([[[0.9, 0.1], [0.2, 0.8]], [[0.5, 0.5], [0.7, 0.3]]]),
                         np.array([[[1.0], [0.0]], [[0.3], [2.0]]]))

tables = arrays(np.float64, (2, 3, 2), elements=st.floats(-100, 100))


def test_f_mean_examples():
    assert f_mean(np.zeros((2, 2, 2))) == 0
    assert f_mean(np.full((3, 1, 2), 3.5)) == 3.5
    assert f_mean(np.arange(1, 9).reshape(2, 2, 2)) == 4.5


@given(tables, tables, st.floats(-10, 10))
def test_f_mean_axioms(Q1, Q2, r):
    assert abs(f_mean(Q1) - f_mean(Q2)) <= np.abs(Q1 - Q2).max() + 1e-9
    assert f_mean(r * Q1) == pytest.approx(r * f_mean(Q1), abs=1e-9)
    assert f_mean(Q1 + r) == pytest.approx(f_mean(Q1) + r, abs=1e-9)


def test_beta_schedule():
    assert beta_schedule(1) == 1 and beta_schedule(4) == 0.25
    betas = np.array([beta_schedule(t) for t in range(1, 10**6 + 1, 997)])
    assert np.all(np.diff(betas) <= 0)
    with pytest.raises(ValueError):
        beta_schedule(0)


def test_zero_rewards_leave_q_at_zero():
    m = TabularModel(np.ones((1, 2, 1)), np.zeros((1, 2, 3)))
    learner = AverageLearner(m, seed=0)
    for _ in range(20):
        learner.step()
    np.testing.assert_array_equal(learner.Q, 0)


def test_reward_enters_the_game():
    # with Q = 0 the game on Q alone is all ties (column 0 by the lexicographic
    # rule), while the reward row makes column 1 the unique minimizer
    R = np.array([[[1.0, -1.0], [0.0, 0.0]]])
    learner = AverageLearner(TabularModel(np.ones((1, 2, 1)), R), eps=0.0, eps_floor=0.0)
    learner.action = 0
    rec = learner.step(next_state=0)
    assert rec.opponent == 1 and rec.q_value == -1.0


def test_one_entry_per_step_and_counts():
    learner = AverageLearner(TWO_STATE, seed=5)
    for k in range(1, 201):
        before = learner.Q.copy()
        learner.step()
        assert np.count_nonzero(learner.Q != before) <= 1
        assert learner.counts.sum() == k
        assert learner.f == pytest.approx(f_mean(learner.Q), abs=1e-12)


def test_divergence_is_reported():
    learner = AverageLearner(TabularModel(np.ones((1, 1, 1)), np.full((1, 1, 1), 5.0)), bound=3.0)
    with pytest.raises(DivergenceError, match="exceeds"):
        for _ in range(10):
            learner.step()


def test_zero_steps_and_gain_record():
    trace = run_average(PENNIES, 0)
    assert trace.snapshot_steps == [0] and trace.gains == [0.0]
    trace = run_average(PENNIES, 300, seed=2, snapshot_every=100)
    assert trace.snapshot_steps == [0, 100, 200, 300] and len(trace.gains) == 4
    assert trace.gains[-1] == pytest.approx(f_mean(trace.final_q))


def test_rejects_discounted_model():
    with pytest.raises(ValueError):
        AverageLearner(TabularModel(np.ones((1, 1, 1)), np.zeros((1, 1, 1)), 0.5))


def test_oracle_shift_moves_gain_not_policy():
    base = rvi_average(TabularModel(np.ones((1, 2, 1)), SKEWED))
    shifted = rvi_average(TabularModel(np.ones((1, 2, 1)), SKEWED + 2.0))
    np.testing.assert_allclose(shifted.v_star, base.v_star + 2.0, atol=1e-7)
    assert f_mean(shifted.Q_star) == pytest.approx(f_mean(base.Q_star) + 2.0, abs=1e-7)
    np.testing.assert_allclose(shifted.policy, base.policy, atol=1e-7)


def test_two_state_matches_relative_value_iteration():
    sol = rvi_average(TWO_STATE)
    for seed in range(2):
        trace = run_average(TWO_STATE, 50_000, seed=seed, eps=0.2, eps_floor=0.2,
                            record_steps=False)
        assert span(trace.final_q - sol.Q_star) <= 0.1


@pytest.mark.slow
def test_learner_shift_over_seeds():
    diffs = []
    for seed in range(3):
        gains = [run_average(TabularModel(np.ones((1, 2, 1)), SKEWED + r), 50_000, seed=seed,
                             record_steps=False).gains[-1] for r in (0.0, 2.0)]
        diffs.append(gains[1] - gains[0])
    assert np.mean(diffs) == pytest.approx(2.0, abs=0.25)


@pytest.mark.slow
def test_matching_pennies_gain():
    trace = run_average(PENNIES, 200_000, seed=0, record_steps=False)
    assert abs(trace.gains[-1]) <= 0.05
