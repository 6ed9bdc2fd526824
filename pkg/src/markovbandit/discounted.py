"""Maximin Q-learning for discounted Markov-Bandit games."""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from markovbandit.core import RunTrace, TabularModel
from markovbandit.matrix_game import solve_maximin


def alpha_schedule(count: int) -> float:
    """Per-triple learning rate 1/(1 + visits so far)."""
    return 1.0 / (1.0 + count)


def exploration_rate(k: int, eps: float, floor: float) -> float:
    """``eps / sqrt(k)`` clipped below at ``floor`` (and at ``eps`` for k <= 1)."""
    if eps <= floor:
        return eps
    return max(floor, eps / math.sqrt(max(k, 1)))


def maximin_policy(Q) -> np.ndarray:
    """Per-state maximin mixed strategy of a Q table."""
    Q = np.asarray(Q)
    return np.array([solve_maximin(Q[s]).row_strategy for s in range(Q.shape[0])],
                    dtype=Q.dtype)


@dataclass
class StepRecord:
    step: int
    state: int
    action: int
    opponent: int
    rate: object
    q_value: object
    f_value: float | None = None


def _draw(cdf, rng):
    # inverse CDF, same convention as environments.sample_transition
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cdf) - 1)


def _pick_opponent(tight, n_opponent, eps, rng):
    o = tight[0]
    if eps > 0 and rng.random() < eps:
        o = int(rng.integers(n_opponent))
    return o


def _pick_action(row, eps, rng):
    n = len(row)
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(n))
    u, acc = rng.random(), 0.0
    for a in range(n - 1):
        acc += float(row[a])
        if u < acc:
            return a
    return n - 1


@dataclass
class DiscountedLearner:
    """Asynchronous maximin Q-learning on a discounted game.

    Every step updates exactly one entry ``Q[s_k, a_k, o_k]``, towards
    ``R + gamma * E_pi Q[s_{k+1}, :, o_k]`` where ``pi`` solves the matrix game
    on ``Q[s_{k+1}]``. ``exact=True`` keeps Q in Fractions (for replaying
    hand-computed traces).
    """

    model: TabularModel
    eps: float = 0.05
    eps_floor: float = 0.01
    seed: int | None = 0
    exact: bool = False
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not self.model.discounted:
            raise ValueError("DiscountedLearner needs a discounted model")
        shape = self.model.shape
        if self.exact:
            self.Q = np.empty(shape, dtype=object)
            self.Q.fill(Fraction(0))
            self._R = np.vectorize(Fraction, otypes=[object])(self.model.R)
            self._gamma = Fraction(self.model.gamma)
        else:
            self.Q = np.zeros(shape)
            self._R = self.model.R
            self._gamma = self.model.gamma
        self.counts = np.zeros(shape, dtype=np.int64)
        self._cdf = np.cumsum(self.model.P, axis=2)
        self.rng = np.random.default_rng(self.seed)
        self.state = self.model.initial_state
        self.action = int(self.rng.integers(self.model.n_actions))
        self.k = 0

    @property
    def current_eps(self) -> float:
        return exploration_rate(self.k, self.eps, self.eps_floor)

    def policy(self) -> np.ndarray:
        return maximin_policy(self.Q)

    def step(self, *, next_state=None, opponent=None, policy=None, next_action=None,
             alpha=None) -> StepRecord:
        """One transition. Keyword overrides force the corresponding random choice."""
        s, a = self.state, self.action
        s_next = _draw(self._cdf[s, a], self.rng) if next_state is None else next_state
        eps = self.current_eps
        if policy is None or opponent is None:
            sol = solve_maximin(self.Q[s_next])
        pi = sol.row_strategy if policy is None else np.asarray(policy, dtype=self.Q.dtype)
        o = _pick_opponent(sol.tight_columns, self.model.n_opponent, eps, self.rng) \
            if opponent is None else opponent
        rate = alpha_schedule(self.counts[s, a, o]) if alpha is None else alpha
        if self.exact:
            rate = Fraction(rate)
        target = self._R[s, a, o] + self._gamma * (pi @ self.Q[s_next, :, o])
        self.Q[s, a, o] = (1 - rate) * self.Q[s, a, o] + rate * target
        self.counts[s, a, o] += 1
        record = StepRecord(self.k, s, a, o, rate, self.Q[s, a, o])
        self.state = s_next
        self.action = _pick_action(pi, eps, self.rng) if next_action is None else next_action
        self.k += 1
        return record


def _snapshot(trace, learner, gain=None):
    trace.snapshot_steps.append(learner.k)
    trace.q_snapshots.append(learner.Q.copy())
    trace.policies.append(learner.policy())
    if gain is not None:
        trace.gains.append(gain)


def run_discounted(model, steps: int, eps: float = 0.05, seed: int = 0,
                   snapshot_every: int | None = None, eps_floor: float = 0.01,
                   record_steps: bool = True, callback=None) -> RunTrace:
    """Run ``steps`` learner updates; snapshots at 0, every ``snapshot_every`` and at the end.

    ``callback(learner)`` is invoked after each snapshot.
    """
    learner = DiscountedLearner(model, eps=eps, eps_floor=eps_floor, seed=seed)
    trace = RunTrace(seed=seed)
    _snapshot(trace, learner)
    for _ in range(steps):
        rec = learner.step()
        if record_steps:
            trace.rows.append((rec.step, rec.state, rec.action, rec.opponent,
                               float(rec.rate), float(rec.q_value), None))
        if snapshot_every and learner.k % snapshot_every == 0 and learner.k != steps:
            _snapshot(trace, learner)
            if callback:
                callback(learner)
    if steps:
        _snapshot(trace, learner)
        if callback:
            callback(learner)
    trace.learner = learner
    return trace
