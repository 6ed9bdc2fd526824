"""Constrained problems used in the experiments and their reduction to games."""

from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from markovbandit.core import TabularModel


class MissingObjective(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConstrainedProblem:
    """Find a policy with ``E sum_k gamma^k r_j(s_k, a_k) >= 0`` for every j.

    ``rewards`` has shape (J, S, A). ``objective`` (S, A) is optional and is
    turned into one more constraint by :func:`shift_rewards`.
    """

    P: np.ndarray
    rewards: np.ndarray
    gamma: float | None = None
    initial_state: int = 0
    objective: np.ndarray | None = None
    action_labels: tuple = ()
    name: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        rewards = np.array(self.rewards, dtype=float)
        if rewards.ndim == 2:
            rewards = rewards[None]
        if rewards.shape[0] < 1:
            raise ValueError("a constrained problem needs at least one reward function")
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "P", np.array(self.P, dtype=float))
        if self.objective is not None:
            object.__setattr__(self, "objective", np.array(self.objective, dtype=float))

    @property
    def n_constraints(self) -> int:
        return self.rewards.shape[0]

    @property
    def bound_c(self) -> float:
        parts = [np.abs(self.rewards).max()]
        if self.objective is not None:
            parts.append(np.abs(self.objective).max())
        return float(max(parts))


def assemble_game(problem: ConstrainedProblem) -> TabularModel:
    """Markov-Bandit game whose opponent picks the constraint index: ``R[s, a, j] = r_j(s, a)``."""
    R = np.moveaxis(problem.rewards, 0, -1)
    return TabularModel(problem.P, R, problem.gamma, problem.initial_state,
                        bound_c=2 * problem.bound_c)


def shift_rewards(problem: ConstrainedProblem, delta: float) -> ConstrainedProblem:
    """Replace the objective by the constraint "objective value >= delta".

    Discounted: appends ``r0 - (1 - gamma) * delta``; average: ``r0 - delta``.
    """
    if problem.objective is None:
        raise MissingObjective("shift_rewards needs a problem with an objective reward")
    scale = 1.0 if problem.gamma is None else 1.0 - problem.gamma
    shifted = problem.objective - scale * delta
    rewards = np.concatenate([problem.rewards, shifted[None]], axis=0)
    return replace(problem, rewards=rewards, objective=None,
                   extra={**problem.extra, "delta": delta})


def build_static_example(which: str, target: float | None = None, gamma: float = 0.5):
    """Single-state examples.

    ``example1``: two actions, rewards (1, -1) and (-1, 1), no objective.
    ``example2``: three actions, ``r_j(a) = 1/2 if a == j``, each with the
    discounted target ``target`` (default 1/3) folded into the reward.
    With ``gamma=None`` the target is subtracted unscaled (average criterion).
    """
    P = np.ones((1, 2, 1))
    if which == "example1":
        rewards = np.array([[[1.0, -1.0]], [[-1.0, 1.0]]])
        return ConstrainedProblem(P, rewards, gamma, 0, name="example1")
    if which == "example2":
        target = 1 / 3 if target is None else target
        P = np.ones((1, 3, 1))
        base = 0.5 * np.eye(3)[:, None, :]  # (J, S=1, A)
        rewards = base - (1.0 if gamma is None else 1 - gamma) * target
        return ConstrainedProblem(P, rewards, gamma, 0, name="example2",
                                  extra={"target": target})
    raise ValueError(f"unknown static example {which!r}")


def queue_transitions(L, service, flow):
    """Transition tensor of the single-server queue, actions flattened as (a, b) pairs."""
    actions = [(a, b) for a in service for b in flow]
    P = np.zeros((L + 1, len(actions), L + 1))
    for i, (a, b) in enumerate(actions):
        P[0, i, 0] = 1 - b * (1 - a)
        P[0, i, 1] = b * (1 - a)
        for x in range(1, L):
            P[x, i, x - 1] = a * (1 - b)
            P[x, i, x] = a * b + (1 - a) * (1 - b)
            P[x, i, x + 1] = (1 - a) * b
        # no arrivals into a full buffer
        P[L, i, L - 1] = a
        P[L, i, L] = 1 - a
    return P, actions


def build_queue(L: int = 5, service=(0.3, 0.4, 0.5, 0.6, 0.7), flow=(0.0, 0.2, 0.4, 0.6),
                gamma: float | None = 0.5) -> ConstrainedProblem:
    """Discrete-time single-server queue with service and flow constraints.

    Costs are negated into rewards: objective ``5 - s``, service constraint
    ``5 - 10a`` and flow constraint ``2 - 5(1 - b)^2``. Starts empty.
    """
    service = tuple(float(a) for a in service)
    flow = tuple(float(b) for b in flow)
    if L < 1:
        raise ValueError(f"buffer size L must be >= 1, got {L}")
    if not service or not 0 < min(service) <= max(service) < 1:
        raise ValueError(f"service rates must lie in (0, 1), got {service}")
    if not flow or not 0 <= min(flow) <= max(flow) < 1:
        raise ValueError(f"flow rates must lie in [0, 1), got {flow}")
    P, actions = queue_transitions(L, service, flow)
    n = L + 1
    a = np.array([ab[0] for ab in actions])
    b = np.array([ab[1] for ab in actions])
    objective = np.repeat((5.0 - np.arange(n))[:, None], len(actions), axis=1)
    r_service = np.broadcast_to(5 - 10 * a, (n, len(actions)))
    r_flow = np.broadcast_to(2 - 5 * (1 - b) ** 2, (n, len(actions)))
    return ConstrainedProblem(P, np.stack([r_service, r_flow]), gamma, 0,
                              objective=objective, action_labels=tuple(actions), name="queue",
                              extra={"L": L, "service": service, "flow": flow})


def sample_transition(model, s, a, rng) -> int:
    """Draw the next state by inverse CDF on one uniform variate."""
    cdf = np.cumsum(model.P[s, a])
    u = rng.random()
    return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))


def sample_transitions(P, states, actions, rng):
    """Vectorized :func:`sample_transition` for arrays of (state, action) pairs."""
    cdf = np.cumsum(P[states, actions], axis=-1)
    u = rng.random(len(states))
    nxt = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(nxt, P.shape[-1] - 1)


PRESETS = {
    "example1": partial(build_static_example, "example1"),
    "example2": partial(build_static_example, "example2"),
    "queue": build_queue,
}


def preset(name: str, **options) -> ConstrainedProblem:
    """Build a named environment; ``options`` go to its constructor (e.g. ``gamma``)."""
    try:
        build = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; choose from {sorted(PRESETS)}") from None
    return build(**options)
