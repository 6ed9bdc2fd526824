"""Monte Carlo auditing of policies against constraints, and bisection over delta."""

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from markovbandit.environments import ConstrainedProblem

log = logging.getLogger(__name__)

Z99 = 2.576


class Verdict(str, enum.Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    INCONCLUSIVE = "Inconclusive"


class BracketInvalid(ValueError):
    pass


@dataclass(frozen=True)
class ConstraintEstimate:
    mean: float
    half_width: float
    n_trajectories: int
    horizon: int


def truncation_horizon(gamma: float, c: float, tol: float) -> int:
    """Smallest H >= 1 with ``gamma**H * c / (1 - gamma) <= tol``."""
    if not 0 < gamma < 1 or c <= 0 or tol <= 0:
        raise ValueError(f"need 0 < gamma < 1, c > 0, tol > 0; got {gamma}, {c}, {tol}")
    bound = c / (1 - gamma)
    if bound <= tol:
        return 1
    H = max(1, math.ceil(math.log(tol / bound) / math.log(gamma)))
    # guard the log rounding on both sides
    while H > 1 and gamma ** (H - 1) * bound <= tol:
        H -= 1
    while gamma ** H * bound > tol:
        H += 1
    return H


def _rewards_of(problem):
    if isinstance(problem, ConstrainedProblem):
        return problem.P, problem.rewards, problem.gamma, problem.initial_state
    # a TabularModel whose opponent columns are the constraints
    return problem.P, np.moveaxis(problem.R, -1, 0), problem.gamma, problem.initial_state


def simulate_returns(P, rewards, policy, gamma, s0, n_traj, horizon, seed):
    """Per-trajectory discounted sums (gamma given) or time averages (gamma None).

    Trajectory i consumes the uniforms ``[2*H*i, 2*H*(i+1))`` of one PCG64
    stream, so results do not depend on how trajectories are batched.
    Returns an array of shape (n_traj, J).
    """
    policy = np.asarray(policy, dtype=float)
    rng = np.random.default_rng(seed)
    pcdf = np.cumsum(policy, axis=1)
    tcdf = np.cumsum(P, axis=2)
    block = max(1, 2_000_000 // (2 * horizon))
    out = []
    for start in range(0, n_traj, block):
        size = min(block, n_traj - start)
        uniforms = rng.random((size, horizon, 2))
        out.append(_rollout(pcdf, tcdf, rewards, gamma, s0, uniforms))
    totals = np.concatenate(out, axis=0)
    if gamma is None:
        totals /= horizon
    return totals


def _rollout(pcdf, tcdf, rewards, gamma, s0, uniforms):
    n_traj, horizon, _ = uniforms.shape
    n_s, n_a = pcdf.shape
    s = np.full(n_traj, s0, dtype=np.intp)
    totals = np.zeros((n_traj, rewards.shape[0]))
    weight = 1.0
    for k in range(horizon):
        a = np.minimum((uniforms[:, k, 0][:, None] >= pcdf[s]).sum(axis=1), n_a - 1)
        totals += weight * rewards[:, s, a].T
        s = np.minimum((uniforms[:, k, 1][:, None] >= tcdf[s, a]).sum(axis=1), n_s - 1)
        if gamma is not None:
            weight *= gamma
    return totals


def mc_constraint_values(problem, policy, n_traj: int = 10_000, tol: float = 1e-3,
                         seed: int = 0, horizon: int | None = None) -> list[ConstraintEstimate]:
    """Estimate every constraint's value under ``policy`` from sampled trajectories.

    Discounted problems truncate at :func:`truncation_horizon` and add ``tol``
    to the 99% half-width to cover the truncation bias. Average-reward problems
    use time averages over ``horizon`` steps (default 10_000).
    """
    P, rewards, gamma, s0 = _rewards_of(problem)
    if gamma is not None:
        H = truncation_horizon(gamma, float(np.abs(rewards).max()) or 1.0, tol)
    else:
        H = horizon or 10_000
    totals = simulate_returns(P, rewards, policy, gamma, s0, n_traj, H, seed)
    means = totals.mean(axis=0)
    std = totals.std(axis=0, ddof=1) if n_traj > 1 else np.zeros_like(means)
    hw = Z99 * std / math.sqrt(n_traj) + tol
    return [ConstraintEstimate(float(m), float(h), n_traj, H) for m, h in zip(means, hw)]


def feasibility_verdict(estimates, margin: float = 0.05) -> Verdict:
    if not estimates:
        raise ValueError("no estimates to judge")
    if all(e.mean >= -margin for e in estimates):
        return Verdict.FEASIBLE
    if any(e.mean < -(margin + e.half_width) for e in estimates):
        return Verdict.INFEASIBLE
    return Verdict.INCONCLUSIVE


def bisect_delta(solver, delta_lo: float, delta_hi: float, delta_tol: float = 0.01):
    """Bisect the largest feasible objective threshold.

    ``solver(delta)`` returns a :class:`Verdict`. Inconclusive midpoints are
    treated as infeasible, which can only move the answer toward ``delta_lo``.
    Returns ``(delta_star, [(delta, verdict), ...])`` where ``delta_star`` is
    the midpoint of the final bracket.
    """
    if not delta_lo < delta_hi:
        raise BracketInvalid(f"need delta_lo < delta_hi, got [{delta_lo}, {delta_hi}]")
    history = []
    lo_v = Verdict(solver(delta_lo))
    history.append((delta_lo, lo_v))
    if lo_v is not Verdict.FEASIBLE:
        raise BracketInvalid(f"lower end delta={delta_lo} is {lo_v.value}, expected Feasible")
    hi_v = Verdict(solver(delta_hi))
    history.append((delta_hi, hi_v))
    if hi_v is not Verdict.INFEASIBLE:
        raise BracketInvalid(f"upper end delta={delta_hi} is {hi_v.value}, expected Infeasible")
    lo, hi = delta_lo, delta_hi
    while hi - lo > delta_tol:
        mid = 0.5 * (lo + hi)
        v = Verdict(solver(mid))
        history.append((mid, v))
        if v is Verdict.FEASIBLE:
            lo = mid
        else:
            if v is Verdict.INCONCLUSIVE:
                log.info("delta=%.6g inconclusive; treating as infeasible", mid)
            hi = mid
    return 0.5 * (lo + hi), history
