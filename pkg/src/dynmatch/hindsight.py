"""Offline optimum: the best integer matching of the agents that arrived by t.

``max r^T y  s.t.  M y <= A(t), y >= 0 integer`` over the full match set.
The LP relaxation is solved with the package simplex. On bipartite graphs
its vertex is integral; otherwise a depth-first branch and bound on the most
fractional variable closes the gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .lp import simplex_max
from .network import MatchingNetwork

INT_TOL = 1e-7


@dataclass(frozen=True)
class HindsightInstance:
    counts: tuple[int, ...]
    rewards: tuple[float, ...]
    matches: tuple[tuple[int, int], ...]

    @classmethod
    def from_network(cls, net: MatchingNetwork, counts: Sequence[int]) -> "HindsightInstance":
        return cls(tuple(int(c) for c in counts), tuple(net.rewards), tuple(net.matches))

    def matrix(self) -> np.ndarray:
        M = np.zeros((len(self.counts), len(self.matches)))
        for m, (i, j) in enumerate(self.matches):
            M[i, m] = M[j, m] = 1.0
        return M


def _feasible(M_int: np.ndarray, y: np.ndarray, counts: np.ndarray) -> bool:
    return bool(np.all(y >= 0) and np.all(M_int @ y <= counts))


def _lp(M, r, counts, lb, ub):
    """LP over y = lb + y' with y' <= ub - lb; None if infeasible."""
    b = counts - M @ lb
    if np.any(b < -1e-9):
        return None
    rows = [M]
    rhs = [np.maximum(b, 0.0)]
    capped = np.flatnonzero(np.isfinite(ub))
    if capped.size:
        room = ub[capped] - lb[capped]
        if np.any(room < 0):
            return None
        E = np.zeros((capped.size, M.shape[1]))
        E[np.arange(capped.size), capped] = 1.0
        rows.append(E)
        rhs.append(room)
    res = simplex_max(r, np.vstack(rows), np.concatenate(rhs))
    y = lb + res.x
    return float(r @ y), y


def optimal_value(instance: HindsightInstance) -> tuple[float, np.ndarray]:
    """Exact optimum value and an optimal integer y."""
    counts = np.asarray(instance.counts, dtype=float)
    k = len(instance.matches)
    if np.any(counts < 0):
        raise ValueError("arrival counts must be non-negative")
    if k == 0 or not counts.any():
        return 0.0, np.zeros(k, dtype=np.int64)
    M = instance.matrix()
    M_int = M.astype(np.int64)
    counts_int = np.asarray(instance.counts, dtype=np.int64)
    r = np.asarray(instance.rewards, dtype=float)

    best_val = 0.0
    best_y = np.zeros(k, dtype=np.int64)
    stack = [(np.zeros(k), np.full(k, np.inf))]
    while stack:
        lb, ub = stack.pop()
        sol = _lp(M, r, counts, lb, ub)
        if sol is None:
            continue
        bound, y = sol
        if bound <= best_val + 1e-9:
            continue
        frac = np.abs(y - np.round(y))
        if frac.max() <= INT_TOL:
            yi = np.round(y).astype(np.int64)
            if _feasible(M_int, yi, counts_int):
                val = float(r @ yi)
                if val > best_val:
                    best_val, best_y = val, yi
                continue
        # branch on the most fractional variable; the down branch is explored first
        m = int(np.argmax(frac))
        v = y[m]
        up_lb = lb.copy()
        up_lb[m] = math.ceil(v - INT_TOL) if frac[m] > INT_TOL else math.floor(v) + 1
        down_ub = ub.copy()
        down_ub[m] = up_lb[m] - 1
        stack.append((up_lb, ub))
        stack.append((lb, down_ub))
    return best_val, best_y


def brute_force_value(instance: HindsightInstance) -> float:
    """Exhaustive enumeration over integer y; for small counts only."""
    counts = instance.counts
    caps = [min(counts[i], counts[j]) for i, j in instance.matches]
    best = 0.0
    y = [0] * len(caps)
    used = list(counts)

    def rec(m: int, val: float) -> None:
        nonlocal best
        if m == len(caps):
            best = max(best, val)
            return
        i, j = instance.matches[m]
        top = min(used[i], used[j])
        for c in range(top + 1):
            used[i] -= c
            used[j] -= c
            y[m] = c
            rec(m + 1, val + c * instance.rewards[m])
            used[i] += c
            used[j] += c
        y[m] = 0

    rec(0, 0.0)
    return best


class HindsightSolver:
    """Memoized optimal values for one network."""

    def __init__(self, net: MatchingNetwork):
        self.net = net
        self.cache: dict[tuple[int, ...], float] = {}

    def value(self, counts: Iterable[int]) -> float:
        key = tuple(int(c) for c in counts)
        hit = self.cache.get(key)
        if hit is None:
            hit = optimal_value(HindsightInstance(key, tuple(self.net.rewards), tuple(self.net.matches)))[0]
            self.cache[key] = hit
        return hit


def hindsight_curve(
    net: MatchingNetwork,
    arrivals: Sequence[int] | np.ndarray,
    checkpoints: Iterable[int],
    solver: HindsightSolver | None = None,
) -> list[float]:
    """Offline optimum at each checkpoint of one arrival sequence."""
    pts = list(checkpoints)
    if pts != sorted(pts):
        raise ValueError("checkpoints must be sorted ascending")
    solver = solver or HindsightSolver(net)
    arr = np.asarray(arrivals, dtype=np.int64)
    counts = np.zeros(net.n, dtype=np.int64)
    out = []
    prev = 0
    for t in pts:
        if t > len(arr):
            raise ValueError(f"checkpoint {t} beyond the {len(arr)} arrivals")
        counts += np.bincount(arr[prev:t], minlength=net.n)
        prev = t
        out.append(solver.value(counts))
    return out


def hindsight_from_counts(net: MatchingNetwork, counts: np.ndarray, solver: HindsightSolver | None = None) -> np.ndarray:
    """Optimum for each row of a (..., n) count array."""
    solver = solver or HindsightSolver(net)
    flat = counts.reshape(-1, net.n)
    vals = np.array([solver.value(row) for row in flat])
    return vals.reshape(counts.shape[:-1])
