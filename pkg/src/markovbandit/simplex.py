"""Dense tableau simplex with Bland's rule.

Small problems only: the matrix games and occupancy LPs in this package have at
most a few hundred variables. The tableau is a list of Python lists, which at
these sizes is faster than numpy and works unchanged on
:class:`fractions.Fraction` entries for exact arithmetic (tolerances are then
zero).
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    objective: object
    duals: np.ndarray | None  # shadow prices of the <= rows, nonnegative


def is_exact(a) -> bool:
    return np.asarray(a).dtype == object


def _pivot(T, row, col):
    prow = T[row]
    piv = prow[col]
    prow = [v / piv for v in prow]
    T[row] = prow
    for i, r in enumerate(T):
        f = r[col]
        if i != row and f != 0:
            T[i] = [v - f * p for v, p in zip(r, prow)]


def run_bland(T, basis, n_cols, tol, max_iter=50_000):
    """Bland's-rule iterations on a tableau whose last row holds reduced costs.

    ``T`` is modified in place (rows are lists; the last column is the
    right-hand side). Returns False if the problem is unbounded.
    """
    m = len(T) - 1
    obj = T[m]
    for _ in range(max_iter):
        obj = T[m]
        entering = next((j for j in range(n_cols) if obj[j] < -tol), -1)
        if entering < 0:
            return True
        leave, best = -1, None
        for i in range(m):
            a = T[i][entering]
            if a > tol:
                ratio = T[i][-1] / a
                if best is None or ratio < best - tol or (
                        abs(ratio - best) <= tol and basis[i] < basis[leave]):
                    leave, best = i, ratio
        if leave < 0:
            return False
        _pivot(T, leave, entering)
        basis[leave] = entering
    raise RuntimeError("simplex iteration limit reached")


def linprog_max(c, A_ub, b_ub, A_eq=None, b_eq=None, tol=1e-11, feas_tol=1e-9,
                max_iter=50_000) -> LPResult:
    """Maximize ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x == b_eq``, ``x >= 0``.

    Equalities are split into two opposite inequalities. Duals are returned
    for the rows of ``A_ub`` only.
    """
    exact = is_exact(c) or is_exact(A_ub)
    if exact:
        tol = feas_tol = Fraction(0)
        conv = np.vectorize(Fraction, otypes=[object])
        zero, one = Fraction(0), Fraction(1)
    else:
        conv = lambda a: np.asarray(a, dtype=float)  # noqa: E731
        zero, one = 0.0, 1.0
    c = conv(np.asarray(c)).reshape(-1)
    n = len(c)
    A = conv(np.asarray(A_ub)).reshape(-1, n)
    b = conv(np.asarray(b_ub)).reshape(-1)
    n_ub = A.shape[0]
    if A_eq is not None and len(A_eq):
        Ae = conv(np.asarray(A_eq)).reshape(-1, n)
        be = conv(np.asarray(b_eq)).reshape(-1)
        A = np.vstack([A, Ae, -Ae])
        b = np.concatenate([b, be, -be])
    m = A.shape[0]

    neg = [i for i in range(m) if b[i] < 0]
    n_art = len(neg)
    n_cols = n + m + n_art
    T = []
    for i in range(m):
        row = A[i].tolist() + [zero] * (m + n_art) + [b[i]]
        row[n + i] = one
        T.append(row)
    basis = [n + i for i in range(m)]
    for k, i in enumerate(neg):
        T[i] = [-v for v in T[i]]
        T[i][n + m + k] = one
        basis[i] = n + m + k

    if n_art:
        # phase 1: maximize -sum(artificials)
        obj = [zero] * (n_cols + 1)
        for i in neg:
            obj = [o - v for o, v in zip(obj, T[i])]
        for k in range(n_art):
            obj[n + m + k] = zero
        T.append(obj)
        run_bland(T, basis, n_cols, tol, max_iter)
        if T[m][-1] < -feas_tol:
            return LPResult(INFEASIBLE, None, None, None)
        T.pop()
        # drive zero-level artificials out of the basis, dropping redundant rows
        keep = []
        for i in range(m):
            if basis[i] >= n + m:
                j = next((j for j in range(n + m) if abs(T[i][j]) > tol), -1)
                if j >= 0:
                    _pivot(T, i, j)
                    basis[i] = j
            if basis[i] < n + m:
                keep.append(i)
        T = [T[i][:n + m] + [T[i][-1]] for i in keep]
        basis = [basis[i] for i in keep]
        n_cols = n + m
        m = len(keep)

    obj = [zero] * (n_cols + 1)
    for j in range(n):
        obj[j] = -c[j]
    for i, bv in enumerate(basis):
        if bv < n and c[bv] != 0:
            obj = [o + c[bv] * v for o, v in zip(obj, T[i])]
    T.append(obj)
    if not run_bland(T, basis, n_cols, tol, max_iter):
        return LPResult(UNBOUNDED, None, None, None)

    x = np.array([zero] * n, dtype=object if exact else float)
    for i, bv in enumerate(basis):
        if bv < n:
            x[bv] = T[i][-1]
    duals = np.array(T[m][n:n + n_ub], dtype=object if exact else float)
    return LPResult(OPTIMAL, x, T[m][-1], duals)
