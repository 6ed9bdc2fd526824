"""Tabular Markov-Bandit game models and their structural checks.

States, agent actions and opponent actions are dense 0-based indices. The
transition tensor ``P[s, a, s_next]`` ignores the opponent, which commits to
one column ``o`` of ``R[s, a, o]`` for the whole run.
"""

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

PROB_TOL = 1e-12


class ModelError(ValueError):
    pass


class ExhaustiveCheckSkipped(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class TabularModel:
    """Finite zero-sum Markov-Bandit game.

    ``gamma=None`` selects the average-reward criterion.
    """

    P: np.ndarray
    R: np.ndarray
    gamma: float | None = None
    initial_state: int = 0
    bound_c: float | None = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        R = np.array(self.R, dtype=float)
        if R.ndim == 2:
            R = R[:, :, None]
        if P.ndim != 3 or R.ndim != 3 or P.shape[:2] != R.shape[:2] or P.shape[0] != P.shape[2]:
            raise ModelError(f"inconsistent shapes P{P.shape} R{R.shape}")
        P.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", R)
        if self.bound_c is None:
            object.__setattr__(self, "bound_c", float(np.abs(R).max()) if R.size else 0.0)

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    @property
    def n_opponent(self) -> int:
        return self.R.shape[2]

    @property
    def discounted(self) -> bool:
        return self.gamma is not None

    @property
    def shape(self):
        return self.R.shape

    def replace(self, **changes) -> "TabularModel":
        kw = dict(P=self.P, R=self.R, gamma=self.gamma, initial_state=self.initial_state,
                  bound_c=self.bound_c, labels=self.labels)
        kw.update(changes)
        return TabularModel(**kw)


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self):
        return self.ok


def validate_model(model: TabularModel) -> ValidationReport:
    """List every violated invariant; an empty report means well-formed."""
    report = ValidationReport()
    P, R = model.P, model.R
    if not np.all(np.isfinite(P)):
        report.issues.append("P contains NaN or infinite entries")
    if not np.all(np.isfinite(R)):
        report.issues.append("R contains NaN or infinite entries")
    for s, a in zip(*np.nonzero((P < 0) | (P > 1))[:2]):
        report.issues.append(f"P[{s}][{a}] has entries outside [0, 1]")
    sums = P.sum(axis=2)
    for s, a in zip(*np.nonzero(~(np.abs(sums - 1) <= PROB_TOL))):
        report.issues.append(f"row-sum violation at ({s},{a}): {sums[s, a]!r}")
    if np.any(np.abs(R) > model.bound_c):
        idx = tuple(int(i) for i in np.argwhere(np.abs(R) > model.bound_c)[0])
        report.issues.append(f"bound violation: |R{list(idx)}| > c={model.bound_c}")
    if model.gamma is not None and not 0 < model.gamma < 1:
        report.issues.append(f"gamma={model.gamma} outside (0, 1)")
    if not 0 <= model.initial_state < model.n_states:
        report.issues.append(f"initial_state={model.initial_state} out of range")
    return report


def normalize_rows(P, tol=PROB_TOL):
    """Renormalize rows that are within ``tol`` of summing to one; others are untouched."""
    P = np.array(P, dtype=float)
    sums = P.sum(axis=-1, keepdims=True)
    close = (np.abs(sums - 1) <= tol) & (sums != 1)
    return np.where(close, P / np.where(close, sums, 1), P)


@dataclass
class ConnectivityReport:
    strongly_connected: bool
    recurrent_state: int | None = None
    recurrent: bool | None = None
    exhaustive: bool = False
    witness: tuple | None = None  # a deterministic policy that never reaches s*


def _reaches_all(supports, target):
    """True if every state reaches ``target`` through the given successor sets."""
    n = len(supports)
    preds = [[] for _ in range(n)]
    for s, succ in enumerate(supports):
        for t in succ:
            preds[t].append(s)
    seen = {target}
    stack = [target]
    while stack:
        t = stack.pop()
        for s in preds[t]:
            if s not in seen:
                seen.add(s)
                stack.append(s)
    return len(seen) == n


def check_connectivity(model: TabularModel, s_star: int | None = None,
                       method: str = "closed-set", budget: int = 10**6) -> ConnectivityReport:
    """Necessary unichain condition plus recurrence of ``s_star`` under every policy.

    ``s_star`` is recurrent for every stationary policy iff every deterministic
    policy reaches it from every state (a randomized policy only adds edges).

    method="enumerate" walks deterministic policies, merging actions with equal
    successor sets; it warns with :class:`ExhaustiveCheckSkipped` and reports
    only the graph verdict when that count exceeds ``budget``.
    method="closed-set" finds the largest set avoiding ``s_star`` that some
    policy can keep the chain inside, which is exact and polynomial.
    """
    support = model.P > 0
    adj = support.any(axis=1)
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    report = ConnectivityReport(strongly_connected=bool(n_comp == 1), recurrent_state=s_star)
    if s_star is None:
        return report

    n = model.n_states
    if method == "enumerate":
        choices = []
        for s in range(n):
            distinct = {tuple(np.flatnonzero(support[s, a])) for a in range(model.n_actions)}
            choices.append(sorted(distinct))
        count = int(np.prod([len(c) for c in choices], dtype=float))
        if count > budget:
            warnings.warn(f"{count} distinct deterministic policies exceed budget {budget}",
                          ExhaustiveCheckSkipped, stacklevel=2)
            return report
        for combo in itertools.product(*choices):
            if not _reaches_all(combo, s_star):
                report.recurrent = False
                report.witness = combo
                break
        else:
            report.recurrent = True
        report.exhaustive = True
        return report

    if method != "closed-set":
        raise ValueError(f"unknown method {method!r}")
    inside = np.ones(n, dtype=bool)
    inside[s_star] = False
    changed = True
    while changed:
        changed = False
        for s in np.flatnonzero(inside):
            # some action keeps every successor inside the set
            stays = (~support[s] | inside[None, :]).all(axis=1)
            if not stays.any():
                inside[s] = False
                changed = True
    report.recurrent = not inside.any()
    report.exhaustive = True
    return report


def expected_q(Q, s, policy):
    """Vector over opponent actions: ``sum_a policy[s, a] * Q[s, a, :]``."""
    Q = np.asarray(Q)
    policy = np.asarray(policy)
    if policy.ndim == 2:
        if policy.shape[0] != Q.shape[0] or policy.shape[1] != Q.shape[1]:
            raise ValueError(f"policy shape {policy.shape} does not match Q shape {Q.shape}")
        row = policy[s]
    else:
        if policy.shape[0] != Q.shape[1]:
            raise ValueError(f"policy length {policy.shape[0]} does not match {Q.shape[1]} actions")
        row = policy
    return row @ Q[s]


def check_policy(policy, tol=PROB_TOL):
    policy = np.asarray(policy, dtype=float)
    if np.any(policy < 0) or np.any(np.abs(policy.sum(axis=-1) - 1) > tol):
        raise ValueError("policy rows must be nonnegative and sum to one")
    return policy


def model_to_dict(model: TabularModel) -> dict:
    return {
        "n_states": model.n_states,
        "n_actions": model.n_actions,
        "n_opponent": model.n_opponent,
        "gamma": "average" if model.gamma is None else model.gamma,
        "P": model.P.ravel().tolist(),
        "R": model.R.ravel().tolist(),
        "initial_state": model.initial_state,
        "bound_c": model.bound_c,
    }


def model_from_dict(doc: dict) -> TabularModel:
    """Inverse of :func:`model_to_dict`; raises ModelError naming the bad field."""
    try:
        n, m, q = int(doc["n_states"]), int(doc["n_actions"]), int(doc["n_opponent"])
    except KeyError as exc:
        raise ModelError(f"model field {exc.args[0]!r} is missing") from None
    for key, size in (("P", n * m * n), ("R", n * m * q)):
        if key not in doc:
            raise ModelError(f"model field {key!r} is missing")
        if len(doc[key]) != size:
            raise ModelError(f"model field {key!r} has {len(doc[key])} entries, expected {size}")
    gamma = doc.get("gamma", "average")
    gamma = None if gamma == "average" else float(gamma)
    P = normalize_rows(np.reshape(doc["P"], (n, m, n)))
    model = TabularModel(P, np.reshape(doc["R"], (n, m, q)), gamma,
                         int(doc.get("initial_state", 0)), doc.get("bound_c"))
    report = validate_model(model)
    if not report:
        raise ModelError("model rejected: " + "; ".join(report.issues))
    return model


@dataclass
class RunTrace:
    """Time-indexed record of a learning run."""

    snapshot_steps: list = field(default_factory=list)
    q_snapshots: list = field(default_factory=list)
    policies: list = field(default_factory=list)
    gains: list = field(default_factory=list)  # f(Q) per snapshot, average criterion only
    rows: list = field(default_factory=list)  # (step, s, a, o, rate, q_updated, f_value)
    seed: int | None = None

    @property
    def final_q(self):
        return self.q_snapshots[-1]

    @property
    def final_policy(self):
        return self.policies[-1]
