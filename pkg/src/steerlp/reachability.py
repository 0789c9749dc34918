"""Discrete reachability over the controlled chain.

Cell j is reachable from cell i in n steps when some length-n control word
gives a positive-probability path. Requiring every target-support cell to be
reachable from every initial-support cell in exactly N steps is a sufficient
feasibility gate for the transport program on well-behaved instances; it is
not necessary, and the check reports witnesses when it fails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Measure
from .ulam import TransitionTensor

SUPPORT_EPS = 1e-12


@dataclass
class ReachabilitySets:
    """Boolean reach relations per step count: steps[n][i, j] for n = 0..horizon."""

    steps: list
    horizon: int
    cumulative: bool = False

    def at(self, n: int) -> np.ndarray:
        return self.steps[n]


def _bool_matmul(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    # numpy matmul on bool arrays runs the AND/OR semiring
    return x @ a


def reachable_sets(tensor: TransitionTensor, horizon: int,
                   cumulative: bool = False) -> ReachabilitySets:
    """Propagate the reach relation for n = 0..horizon.

    reach_0 is the identity; reach_{n+1}(i, j) holds when some intermediate
    cell m and control k give reach_n(i, m) and positive mass m -> j. With
    cumulative=True, step n instead collects everything reachable in <= n
    steps.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    adj = tensor.support_adjacency()
    eye = np.eye(tensor.n_x, dtype=bool)
    steps = [eye]
    cur = eye
    for _ in range(horizon):
        nxt = _bool_matmul(cur, adj)
        if cumulative:
            nxt = nxt | cur
        steps.append(nxt)
        cur = nxt
    return ReachabilitySets(steps=steps, horizon=horizon, cumulative=cumulative)


@dataclass
class Verdict:
    """Outcome of the sufficient-condition check."""

    satisfied: bool
    witnesses: list

    def __bool__(self) -> bool:
        return self.satisfied


def check_sufficient_condition(sets: ReachabilitySets, mu0: Measure, muf: Measure,
                               horizon: int | None = None,
                               support_eps: float = SUPPORT_EPS) -> Verdict:
    """Check that the whole target support is reachable from the whole initial support.

    Satisfied when every cell carrying target mass above support_eps is
    reachable in exactly `horizon` steps from every cell carrying initial
    mass above support_eps. Violated verdicts list the offending (source,
    target) pairs.
    """
    n = sets.horizon if horizon is None else horizon
    if n > sets.horizon:
        raise ValueError(f"horizon {n} exceeds propagated range {sets.horizon}")
    if mu0.n_x != muf.n_x:
        raise ValueError("measures live on different partitions")
    reach = sets.at(n)
    if reach.shape[0] != mu0.n_x:
        raise ValueError("measures do not match the tensor's cell count")
    src = mu0.support(support_eps)
    tgt = muf.support(support_eps)
    ok = reach[np.ix_(src, tgt)]
    if ok.all():
        return Verdict(satisfied=True, witnesses=[])
    bad_i, bad_j = np.nonzero(~ok)
    witnesses = [(int(src[a]), int(tgt[b])) for a, b in zip(bad_i, bad_j)]
    return Verdict(satisfied=False, witnesses=witnesses)


def control_word(tensor: TransitionTensor, source: int, target: int,
                 horizon: int) -> list[int] | None:
    """A length-`horizon` control word giving a positive-probability path.

    Returns None when no such word exists. Deterministic: smallest admissible
    indices are chosen at every step.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    adj_k = [tensor.control_adjacency(k) for k in range(tensor.n_u)]
    adj = np.zeros_like(adj_k[0])
    for a in adj_k:
        adj |= a
    # forward reachable vectors from the source
    front = [np.zeros(tensor.n_x, dtype=bool)]
    front[0][source] = True
    for _ in range(horizon):
        front.append(_bool_matmul(front[-1], adj))
    if not front[horizon][target]:
        return None
    word: list[int] = []
    j = target
    for n in range(horizon, 0, -1):
        found = None
        for k in range(tensor.n_u):
            sources = np.nonzero(front[n - 1] & adj_k[k][:, j])[0]
            if sources.size:
                found = (int(sources[0]), k)
                break
        assert found is not None, "propagation and backtrace disagree"
        j, k = found
        word.append(k)
    word.reverse()
    return word
