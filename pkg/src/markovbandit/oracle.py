"""Model-based ground truth: Bellman operators, their fixed points and the occupancy LP."""

from dataclasses import dataclass

import numpy as np

from markovbandit.average import f_mean
from markovbandit.core import TabularModel
from markovbandit.discounted import maximin_policy
from markovbandit.environments import ConstrainedProblem
from markovbandit.matrix_game import solve_maximin
from markovbandit.simplex import INFEASIBLE, OPTIMAL, linprog_max


class IterationBudgetExceeded(RuntimeError):
    pass


class CriterionMismatch(ValueError):
    pass


def _need(model, discounted):
    if model.discounted != discounted:
        want = "a discounted" if discounted else "an average-reward"
        raise CriterionMismatch(f"operation needs {want} model")


def span(x) -> float:
    x = np.asarray(x)
    return float(x.max() - x.min())


# -- discounted ---------------------------------------------------------------

def state_values(Q):
    """``H[s, o] = pi_Q(s) @ Q[s, :, o]`` with ``pi_Q`` the per-state maximin strategy."""
    policy = maximin_policy(Q)
    return np.einsum("sa,sao->so", policy, Q), policy


def apply_T_discounted(model: TabularModel, Q) -> np.ndarray:
    """``R + gamma * P @ H`` where H evaluates every column under the maximin policy of Q."""
    _need(model, True)
    H, _ = state_values(np.asarray(Q, dtype=float))
    return model.R + model.gamma * np.einsum("sat,to->sao", model.P, H)


def maximin_backup(model: TabularModel, Q, f_value=None) -> np.ndarray:
    """Backup with the maximin taken inside the transition sum, per successor.

    Each successor contributes ``max_pi min_o' (R(s,a,o') + w * E_pi Q(s+, ., o'))``
    with ``w = gamma`` (discounted) or 1 (average, minus ``f_value``). The result
    does not depend on o. This form is nonexpansive in the sup norm for every Q
    (factor gamma when discounted), unlike the column-evaluated operators.
    """
    Q = np.asarray(Q, dtype=float)
    w = 1.0 if model.gamma is None else model.gamma
    S, A, O = model.shape
    out = np.empty((S, A))
    for s in range(S):
        for a in range(A):
            total = 0.0
            for t in np.flatnonzero(model.P[s, a]):
                total += model.P[s, a, t] * solve_maximin(model.R[s, a][None, :] + w * Q[t]).value
            out[s, a] = total
    if model.gamma is None:
        out -= f_mean(Q) if f_value is None else f_value
    return np.repeat(out[:, :, None], O, axis=2)


def fixed_point_discounted(model: TabularModel, tol: float = 1e-10, budget: int = 100_000):
    """Iterate :func:`apply_T_discounted` to within ``tol`` of its fixed point.

    Stops once ``|Q_new - Q|_inf <= tol (1 - gamma) / gamma``. Returns (Q, policy).
    """
    _need(model, True)
    g = model.gamma
    stop = tol * (1 - g) / g
    Q = np.zeros(model.shape)
    for _ in range(budget):
        Q_new = apply_T_discounted(model, Q)
        done = np.abs(Q_new - Q).max() <= stop
        Q = Q_new
        if done:
            return Q, maximin_policy(Q)
    raise IterationBudgetExceeded(f"no convergence within {budget} sweeps")


# -- average ------------------------------------------------------------------

def apply_T_average(model: TabularModel, Q, f_value=None) -> np.ndarray:
    """Average-reward operator matching the learner's update, minus ``f_value``.

    For each successor ``s+`` the strategy ``pi`` solves the game
    ``R(s,a,o) + E_pi Q(s+, ., o)``; column o is then evaluated under that pi.
    ``f_value`` defaults to ``f_mean(Q)``.
    """
    _need(model, False)
    Q = np.asarray(Q, dtype=float)
    S, A, O = model.shape
    out = np.empty((S, A, O))
    for s in range(S):
        for a in range(A):
            acc = np.zeros(O)
            for t in np.flatnonzero(model.P[s, a]):
                pi = solve_maximin(model.R[s, a][None, :] + Q[t]).row_strategy
                acc += model.P[s, a, t] * (pi @ Q[t])
            out[s, a] = model.R[s, a] + acc
    return out - (f_mean(Q) if f_value is None else f_value)


@dataclass
class AverageSolution:
    Q_star: np.ndarray
    v_star: np.ndarray  # gain per opponent column
    H_star: np.ndarray  # bias, [s, o]
    policy: np.ndarray
    residual: float
    iterations: int


def rvi_average(model: TabularModel, tol: float = 1e-9, eta: float = 0.5,
                budget: int = 100_000, operator=None) -> AverageSolution:
    """Damped relative value iteration ``Q <- (1 - eta) Q + eta T'(Q)``.

    Stops when the span of the increment is at most ``tol``. A span-small
    increment can still be a constant drift, so the constant is then folded in
    (``T'`` is shift invariant, so this lands on the anchored fixed point).
    ``operator`` defaults to :func:`apply_T_average`.
    """
    _need(model, False)
    T = operator or apply_T_average
    Q = np.zeros(model.shape)
    for it in range(1, budget + 1):
        step = T(model, Q) - Q
        if span(step) <= tol:
            Q = Q + step.mean()
            break
        Q = Q + eta * step
    else:
        raise IterationBudgetExceeded(f"relative value iteration did not settle in {budget} sweeps")
    TQ = T(model, Q, 0.0)  # without the anchor, T'Q = TQ - f(Q)
    v_star = (TQ - Q).mean(axis=(0, 1))
    residual = float(np.abs(TQ - f_mean(Q) - Q).max())
    H_star, policy = state_values(Q)
    return AverageSolution(Q, v_star, H_star, policy, residual, it)


# -- occupancy LP -------------------------------------------------------------

@dataclass
class CMDPSolution:
    value: float | None  # objective value, None for a pure feasibility problem
    occupancy: np.ndarray | None
    policy: np.ndarray | None
    feasible: bool


def cmdp_lp_discounted(problem: ConstrainedProblem, objective_index: int | None = None,
                       initial_distribution=None) -> CMDPSolution:
    """Occupancy-measure LP of a discounted constrained MDP.

    Maximizes ``problem.objective`` if present, or ``rewards[objective_index]``
    (that row is then not a constraint); otherwise only checks feasibility.
    The occupancy is normalized to total mass one.
    """
    if problem.gamma is None:
        raise CriterionMismatch("the occupancy LP is implemented for the discounted criterion")
    g = problem.gamma
    P = problem.P
    S, A = P.shape[:2]
    mu = np.zeros(S)
    if initial_distribution is None:
        mu[problem.initial_state] = 1.0
    else:
        mu = np.asarray(initial_distribution, dtype=float)

    constraints = list(problem.rewards)
    if objective_index is not None:
        r0 = constraints.pop(objective_index)
    else:
        r0 = problem.objective

    # flow: sum_a rho(s', a) - g sum P(s,a,s') rho(s,a) = (1 - g) mu(s')
    A_eq = np.zeros((S, S * A))
    for t in range(S):
        A_eq[t, t * A:(t + 1) * A] += 1.0
        A_eq[t] -= g * P[:, :, t].ravel()
    b_eq = (1 - g) * mu
    if constraints:
        A_ub = -np.array([r.ravel() for r in constraints]) / (1 - g)
    else:
        A_ub = np.zeros((0, S * A))
    b_ub = np.zeros(len(A_ub))
    c = np.zeros(S * A) if r0 is None else np.asarray(r0, dtype=float).ravel() / (1 - g)

    res = linprog_max(c, A_ub, b_ub, A_eq, b_eq)
    if res.status == INFEASIBLE:
        return CMDPSolution(None, None, None, False)
    if res.status != OPTIMAL:
        raise RuntimeError(f"occupancy LP ended with status {res.status}")
    rho = np.clip(res.x.reshape(S, A), 0.0, None)
    mass = rho.sum(axis=1, keepdims=True)
    policy = np.where(mass > 0, rho / np.where(mass > 0, mass, 1), 1.0 / A)
    value = None if r0 is None else float(res.objective)
    return CMDPSolution(value, rho, policy, True)


def lp_feasible_at(problem: ConstrainedProblem, delta: float) -> bool:
    """Is ``objective value >= delta`` attainable together with the constraints?"""
    from markovbandit.environments import shift_rewards
    return cmdp_lp_discounted(shift_rewards(problem, delta)).feasible


# -- feasibility --------------------------------------------------------------

def feasibility_value(game: TabularModel, s0: int | None = None, tol: float = 1e-10) -> float:
    """Game value at the start state; nonnegative exactly when the constraints can be met.

    Discounted: ``min_o pi*(s0) @ Q*[s0, :, o]``. Average: the gain ``min_o v*(o)``.
    """
    s0 = game.initial_state if s0 is None else s0
    if game.discounted:
        Q, _ = fixed_point_discounted(game, tol)
        return float(solve_maximin(Q[s0]).value)
    return float(rvi_average(game, tol).v_star.min())
