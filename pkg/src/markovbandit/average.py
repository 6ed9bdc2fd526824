"""Maximin Q-learning for average-reward Markov-Bandit games.

The gain is tracked by ``f(Q)``, the mean of the whole table, which is
subtracted from every target instead of discounting.
"""

from dataclasses import dataclass, field

import numpy as np

from markovbandit.core import RunTrace, TabularModel
from markovbandit.discounted import (
    StepRecord,
    _draw,
    _pick_action,
    _pick_opponent,
    _snapshot,
    exploration_rate,
    maximin_policy,
)
from markovbandit.matrix_game import solve_maximin

DIVERGENCE_BOUND = 1e6


class DivergenceError(RuntimeError):
    """Raised when ``max |Q|`` leaves the monitored bound."""


def f_mean(Q) -> float:
    return float(np.mean(Q))


def beta_schedule(t: int) -> float:
    if t < 1:
        raise ValueError(f"beta_schedule needs t >= 1, got {t}")
    return 1.0 / t


@dataclass
class AverageLearner:
    """Asynchronous learner for the average criterion.

    The matrix game solved at each step is ``R[s_k, a_k, o] + E_pi Q[s_{k+1}, :, o]``,
    so the immediate reward takes part in choosing both the policy and ``o_k``.
    ``f`` is maintained incrementally (one entry changes per step).
    """

    model: TabularModel
    eps: float = 0.05
    eps_floor: float = 0.01
    seed: int | None = 0
    bound: float = DIVERGENCE_BOUND
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.model.discounted:
            raise ValueError("AverageLearner needs an average-reward model")
        self.Q = np.zeros(self.model.shape)
        self.counts = np.zeros(self.model.shape, dtype=np.int64)
        self._cdf = np.cumsum(self.model.P, axis=2)
        self.rng = np.random.default_rng(self.seed)
        self.state = self.model.initial_state
        self.action = int(self.rng.integers(self.model.n_actions))
        self.k = 0
        self._sum = 0.0

    @property
    def f(self) -> float:
        return self._sum / self.Q.size

    @property
    def current_eps(self) -> float:
        return exploration_rate(self.k, self.eps, self.eps_floor)

    def policy(self) -> np.ndarray:
        return maximin_policy(self.Q)

    def step(self, *, next_state=None, opponent=None, next_action=None) -> StepRecord:
        s, a = self.state, self.action
        R = self.model.R
        s_next = _draw(self._cdf[s, a], self.rng) if next_state is None else next_state
        eps = self.current_eps
        sol = solve_maximin(R[s, a][None, :] + self.Q[s_next])
        pi = sol.row_strategy
        o = _pick_opponent(sol.tight_columns, self.model.n_opponent, eps, self.rng) \
            if opponent is None else opponent
        f = self.f
        y = R[s, a, o] + pi @ self.Q[s_next, :, o] - f
        self.counts[s, a, o] += 1
        beta = beta_schedule(self.counts[s, a, o])
        old = self.Q[s, a, o]
        new = (1 - beta) * old + beta * y
        self.Q[s, a, o] = new
        self._sum += new - old
        if abs(new) > self.bound:
            raise DivergenceError(f"|Q[{s},{a},{o}]| = {abs(new):.3g} exceeds {self.bound:g} "
                                  f"at step {self.k}; f = {self.f:.6g}")
        record = StepRecord(self.k, s, a, o, beta, new, f)
        self.state = s_next
        self.action = _pick_action(pi, eps, self.rng) if next_action is None else next_action
        self.k += 1
        return record


def run_average(model, steps: int, eps: float = 0.05, seed: int = 0,
                snapshot_every: int | None = None, eps_floor: float = 0.01,
                record_steps: bool = True, callback=None) -> RunTrace:
    """Like :func:`run_discounted`; every snapshot also stores ``f(Q)`` as the gain estimate."""
    learner = AverageLearner(model, eps=eps, eps_floor=eps_floor, seed=seed)
    trace = RunTrace(seed=seed)
    _snapshot(trace, learner, f_mean(learner.Q))
    for _ in range(steps):
        rec = learner.step()
        if record_steps:
            trace.rows.append((rec.step, rec.state, rec.action, rec.opponent,
                               rec.rate, float(rec.q_value), rec.f_value))
        if snapshot_every and learner.k % snapshot_every == 0 and learner.k != steps:
            _snapshot(trace, learner, f_mean(learner.Q))
            if callback:
                callback(learner)
    if steps:
        _snapshot(trace, learner, f_mean(learner.Q))
        if callback:
            callback(learner)
    trace.learner = learner
    return trace
