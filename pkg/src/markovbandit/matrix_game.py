"""Maximin solver for the per-state matrix game ``max_p min_o sum_a p[a] M[a, o]``."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from markovbandit.simplex import is_exact, run_bland

TIGHT_TOL = 1e-9


class NonFiniteInput(ValueError):
    pass


@dataclass(frozen=True)
class MatrixGameSolution:
    row_strategy: np.ndarray
    value: float
    tight_columns: tuple[int, ...]
    dual_strategy: np.ndarray


def _check(M):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] == 0 or M.shape[1] == 0:
        raise ValueError(f"payoff matrix must be 2-d and nonempty, got shape {M.shape}")
    if not is_exact(M) and not np.all(np.isfinite(M)):
        raise NonFiniteInput("payoff matrix contains NaN or infinite entries")
    return M


def _normalize(M):
    """Affine map of M onto [1, 2]; returns (M', lo, span)."""
    lo, hi = M.min(), M.max()
    span = hi - lo
    if span == 0:
        one = Fraction(1) if is_exact(M) else 1.0
        return np.full(M.shape, one, dtype=M.dtype), lo, span
    return (M - lo) / span + 1, lo, span


def _column_lp(M):
    """Solve max 1'y s.t. M' y <= 1, y >= 0 on the normalized game.

    The optimal y rescales to the opponent's minimax mixture and the shadow
    prices of the rows rescale to the agent's maximin mixture.
    """
    Mn, lo, span = _normalize(M)
    n_rows, n_cols = Mn.shape
    exact = is_exact(M)
    zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
    # the right-hand side is all ones, so the slack basis is feasible: no phase 1
    T = []
    for i, row in enumerate(Mn.tolist()):
        slack = [zero] * n_rows
        slack[i] = one
        T.append(row + slack + [one])
    T.append([-one] * n_cols + [zero] * (n_rows + 1))
    basis = list(range(n_cols, n_cols + n_rows))
    if not run_bland(T, basis, n_cols + n_rows, zero if exact else 1e-11):
        raise RuntimeError("matrix game LP reported unbounded")
    dtype = object if exact else float
    y = np.array([zero] * n_cols, dtype=dtype)
    for i, bv in enumerate(basis):
        if bv < n_cols:
            y[bv] = T[i][-1]
    duals = np.array(T[n_rows][n_cols:n_cols + n_rows], dtype=dtype)
    total = T[n_rows][-1]
    q = y / total
    p = duals / duals.sum()
    value = (one / total - 1) * span + lo
    if not exact:
        q = np.maximum(q, 0.0)
        q /= q.sum()
        p = np.maximum(p, 0.0)
        p /= p.sum()
    return p, q, value


def solve_maximin(M) -> MatrixGameSolution:
    """Optimal mixed row strategy, game value and an optimal column mixture.

    Object arrays of ``Fraction`` are solved exactly.
    """
    M = _check(M)
    p, q, value = _column_lp(M)
    payoffs = p @ M
    if is_exact(M):
        tight = tuple(int(o) for o in np.flatnonzero(payoffs == value))
    else:
        value = float(value)
        slack = TIGHT_TOL * max(1.0, abs(value))
        tight = tuple(np.nonzero(payoffs <= value + slack)[0].tolist())
    return MatrixGameSolution(p, value, tight, q)


def solve_dual(M):
    """Opponent's problem ``min_q max_a sum_o q[o] M[a, o]`` as its own LP.

    Solved as the maximin of the transposed, negated game so that it is an
    independent certificate for :func:`solve_maximin`.
    """
    M = _check(M)
    sol = solve_maximin(-M.T)
    return sol.row_strategy, -sol.value


def game_value(M) -> float:
    return solve_maximin(M).value


def pure_bounds(M):
    """(max_a min_o M, min_o max_a M): the pure-strategy sandwich around the value."""
    M = np.asarray(M)
    return M.min(axis=1).max(), M.max(axis=0).min()
