"""Greedy matching policies.

Each policy has a pure decision function whose arguments are exactly the
information the policy is allowed to see:

* ``pm_decide`` gets the availability set of the whole network (global,
  availability-based);
* ``tp_decide`` gets the availability of the arriving type's children and
  parent, ``ttp_decide`` only of its children (local, availability-based);
* ``lq_decide`` gets the neighbours' queue lengths (local, queue-length).

The :class:`Policy` wrappers extract those views from a full queue vector
for the simulation engines, and expose exact decision distributions for
drift computations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .network import NotAcyclic, RootedTree
from .planner import BasisResolver, SppSolution, resolve_with_basis


class Action(str, Enum):
    MATCH = "match"
    ENQUEUE = "enqueue"
    DISCARD = "discard"


@dataclass(frozen=True)
class PolicyDecision:
    action: Action
    partner: int | None = None
    # partner -> probability over the partners actually used; the
    # remaining mass is the no-match outcome
    probabilities: tuple[tuple[int, float], ...] = ()

    @classmethod
    def match(cls, partner: int, probabilities: tuple[tuple[int, float], ...] | None = None) -> "PolicyDecision":
        return cls(Action.MATCH, partner, probabilities if probabilities is not None else ((partner, 1.0),))

    @classmethod
    def no_match(cls, discard: bool) -> "PolicyDecision":
        return cls(Action.DISCARD if discard else Action.ENQUEUE)


@dataclass(frozen=True)
class PolicyInfo:
    granularity: str  # "availability" | "queue-length"
    scope: str  # "local" | "global"


AVAILABILITY_GLOBAL = PolicyInfo("availability", "global")
AVAILABILITY_LOCAL = PolicyInfo("availability", "local")
QUEUE_LENGTH_LOCAL = PolicyInfo("queue-length", "local")


# -- pure decision functions -------------------------------------------------


def pm_weights(
    spp: SppSolution, resolver: BasisResolver, availability: frozenset[int], arrival: int
) -> list[tuple[int, float]]:
    """Normalized matching probabilities over non-empty active neighbours."""
    partners = [i for i in spp.reduced.neighbors(arrival) if i in availability]
    if not partners:
        return []
    z, _ = resolve_with_basis(resolver, availability)
    w = [z[spp.net.match_index(i, arrival)] for i in partners]
    total = sum(w)
    return [(i, x / total) for i, x in zip(partners, w)]


def pm_decide(
    spp: SppSolution,
    resolver: BasisResolver,
    availability: frozenset[int],
    arrival: int,
    u: float,
    *,
    discard: bool = False,
) -> PolicyDecision:
    """Probabilistic matching; ``u`` is one uniform draw in [0, 1)."""
    probs = pm_weights(spp, resolver, availability, arrival)
    if not probs:
        return PolicyDecision.no_match(discard)
    acc = 0.0
    chosen = probs[-1][0]
    for i, p in probs:
        acc += p
        if u < acc:
            chosen = i
            break
    return PolicyDecision.match(chosen, tuple(probs))


def tp_decide(
    tree: RootedTree,
    child_available: Mapping[int, bool],
    parent_available: bool,
    arrival: int,
    *,
    discard: bool = False,
) -> PolicyDecision:
    """Tree priority: a non-empty child (smallest index first), else the parent."""
    for c in tree.children[arrival]:
        if child_available.get(c, False):
            return PolicyDecision.match(c)
    if tree.parent[arrival] >= 0 and parent_available:
        return PolicyDecision.match(tree.parent[arrival])
    return PolicyDecision.no_match(discard)


def ttp_decide(
    tree: RootedTree, child_available: Mapping[int, bool], arrival: int, *, discard: bool = False
) -> PolicyDecision:
    """Truncated tree priority: children only; the parent is never consulted."""
    for c in tree.children[arrival]:
        if child_available.get(c, False):
            return PolicyDecision.match(c)
    return PolicyDecision.no_match(discard)


def lq_decide(neighbor_lengths: Mapping[int, int], arrival: int, *, discard: bool = False) -> PolicyDecision:
    best, best_len = None, 0
    for i in sorted(neighbor_lengths):
        if neighbor_lengths[i] > best_len:
            best, best_len = i, neighbor_lengths[i]
    if best is None:
        return PolicyDecision.no_match(discard)
    return PolicyDecision.match(best)


def static_priority_decide(
    order: Sequence[int], available: Mapping[int, bool], arrival: int, *, discard: bool = False
) -> PolicyDecision:
    """Highest-priority available partner in ``order`` (partners of allowed matches)."""
    for i in order:
        if available.get(i, False):
            return PolicyDecision.match(i)
    return PolicyDecision.no_match(discard)


def adversarial_decide(Q: Sequence[int], arrival: int, *, discard: bool = False) -> PolicyDecision:
    """Greedy policy on a path that is not consistent.

    With both path neighbours non-empty it matches the lower neighbour when
    queue 0 is empty and the upper one otherwise.
    """
    n = len(Q)
    lo = arrival - 1 if arrival > 0 and Q[arrival - 1] > 0 else None
    hi = arrival + 1 if arrival < n - 1 and Q[arrival + 1] > 0 else None
    if lo is not None and hi is not None:
        return PolicyDecision.match(lo if Q[0] == 0 else hi)
    if lo is not None:
        return PolicyDecision.match(lo)
    if hi is not None:
        return PolicyDecision.match(hi)
    return PolicyDecision.no_match(discard)


# -- policy objects used by the engines ---------------------------------------


class Policy:
    name: str = "policy"
    info: PolicyInfo
    randomized = False

    def decide(self, Q: Sequence[int], arrival: int, u: float = 0.0, discard: bool = False) -> PolicyDecision:
        raise NotImplementedError

    def distribution(self, Q: Sequence[int], arrival: int) -> list[tuple[int | None, float]]:
        """Exact outcome distribution; ``None`` is the no-match outcome."""
        d = self.decide(Q, arrival)
        return [(d.partner if d.action is Action.MATCH else None, 1.0)]

    def batch_decide(self, Q: np.ndarray, arrivals: np.ndarray, u: np.ndarray | None) -> np.ndarray:
        """Partner per row (-1 for no match) for a batch of replications."""
        out = np.empty(len(arrivals), dtype=np.int64)
        for r in range(len(arrivals)):
            d = self.decide(Q[r], int(arrivals[r]), 0.0 if u is None else float(u[r]))
            out[r] = d.partner if d.action is Action.MATCH else -1
        return out


class StaticPriorityPolicy(Policy):
    """Static priority with per-type ordered partner lists."""

    info = AVAILABILITY_LOCAL

    def __init__(self, orders: Sequence[Sequence[int]], name: str = "static"):
        self.orders = tuple(tuple(o) for o in orders)
        self.name = name
        width = max((len(o) for o in self.orders), default=0)
        self._table = np.full((len(self.orders), max(width, 1)), -1, dtype=np.int64)
        for i, o in enumerate(self.orders):
            self._table[i, : len(o)] = o

    def decide(self, Q, arrival, u=0.0, discard=False):
        order = self.orders[arrival]
        return static_priority_decide(order, {i: Q[i] > 0 for i in order}, arrival, discard=discard)

    def batch_decide(self, Q, arrivals, u):
        rows = np.arange(len(arrivals))
        partner = np.full(len(arrivals), -1, dtype=np.int64)
        cand = self._table[arrivals]
        for pos in range(cand.shape[1] - 1, -1, -1):
            c = cand[:, pos]
            ok = (c >= 0) & (Q[rows, np.maximum(c, 0)] > 0)
            partner = np.where(ok, c, partner)
        return partner


class TreePriority(StaticPriorityPolicy):
    def __init__(self, tree: RootedTree):
        self.tree = tree
        orders = []
        for i in range(tree.n):
            o = list(tree.children[i])
            if tree.parent[i] >= 0:
                o.append(tree.parent[i])
            orders.append(o)
        super().__init__(orders, name="tp")

    def decide(self, Q, arrival, u=0.0, discard=False):
        t = self.tree
        kids = {c: Q[c] > 0 for c in t.children[arrival]}
        p = t.parent[arrival]
        return tp_decide(t, kids, p >= 0 and Q[p] > 0, arrival, discard=discard)


class TruncatedTreePriority(StaticPriorityPolicy):
    def __init__(self, tree: RootedTree):
        self.tree = tree
        super().__init__([list(tree.children[i]) for i in range(tree.n)], name="ttp")

    def decide(self, Q, arrival, u=0.0, discard=False):
        kids = {c: Q[c] > 0 for c in self.tree.children[arrival]}
        return ttp_decide(self.tree, kids, arrival, discard=discard)


class LongestQueue(Policy):
    info = QUEUE_LENGTH_LOCAL
    name = "lq"

    def __init__(self, spp: SppSolution):
        nbrs = [spp.reduced.neighbors(i) for i in range(spp.net.n)]
        self.neighbors = nbrs
        width = max(len(x) for x in nbrs)
        self._table = np.full((len(nbrs), width), -1, dtype=np.int64)
        for i, x in enumerate(nbrs):
            self._table[i, : len(x)] = x

    def decide(self, Q, arrival, u=0.0, discard=False):
        return lq_decide({i: int(Q[i]) for i in self.neighbors[arrival]}, arrival, discard=discard)

    def batch_decide(self, Q, arrivals, u):
        rows = np.arange(len(arrivals))
        cand = self._table[arrivals]
        best = np.full(len(arrivals), -1, dtype=np.int64)
        best_len = np.zeros(len(arrivals), dtype=Q.dtype)
        for pos in range(cand.shape[1]):
            c = cand[:, pos]
            length = np.where(c >= 0, Q[rows, np.maximum(c, 0)], 0)
            better = length > best_len
            best = np.where(better, c, best)
            best_len = np.where(better, length, best_len)
        return best


class ProbabilisticMatching(Policy):
    info = AVAILABILITY_GLOBAL
    name = "pm"
    randomized = True
    MAX_TYPES = 20

    def __init__(self, spp: SppSolution, resolver: BasisResolver | None = None):
        if spp.net.n > self.MAX_TYPES:
            raise ValueError(f"pm supports at most {self.MAX_TYPES} types")
        self.spp = spp
        self.resolver = resolver or BasisResolver(spp)
        n = spp.net.n
        nbrs = [spp.reduced.neighbors(i) for i in range(n)]
        self.width = max(len(x) for x in nbrs)
        self._nbr = np.full((n, self.width), -1, dtype=np.int64)
        for i, x in enumerate(nbrs):
            self._nbr[i, : len(x)] = x
        self._bits = 1 << np.arange(n, dtype=np.int64)
        # per availability mask: cumulative probabilities over neighbour slots
        self._cum = np.zeros((1 << n, n, self.width))
        self._filled = np.zeros(1 << n, dtype=bool)

    def _fill(self, mask: int) -> None:
        avail = frozenset(i for i in range(self.spp.net.n) if mask >> i & 1)
        for j in range(self.spp.net.n):
            probs = dict(pm_weights(self.spp, self.resolver, avail, j))
            acc = 0.0
            for slot, i in enumerate(self._nbr[j]):
                if i >= 0 and i in probs:
                    acc += probs[i]
                self._cum[mask, j, slot] = acc
        self._filled[mask] = True

    def _mask(self, Q) -> int:
        return int(sum(1 << i for i, q in enumerate(Q) if q > 0))

    def _choose(self, cum: np.ndarray, nbr: np.ndarray, u: float) -> int:
        if cum[-1] <= 0.0:
            return -1
        last = -1
        for slot in range(len(nbr)):
            if nbr[slot] < 0:
                break
            lo = cum[slot - 1] if slot else 0.0
            if cum[slot] > lo:
                last = int(nbr[slot])
                if u < cum[slot]:
                    return last
        return last

    def decide(self, Q, arrival, u=0.0, discard=False):
        avail = frozenset(i for i, q in enumerate(Q) if q > 0)
        d = pm_decide(self.spp, self.resolver, avail, arrival, u, discard=discard)
        mask = self._mask(Q)
        if not self._filled[mask]:
            self._fill(mask)
        # the engine path and the batch path pick partners from the same table
        if d.action is Action.MATCH:
            partner = self._choose(self._cum[mask, arrival], self._nbr[arrival], u)
            return PolicyDecision.match(partner, d.probabilities)
        return d

    def distribution(self, Q, arrival):
        avail = frozenset(i for i, q in enumerate(Q) if q > 0)
        probs = pm_weights(self.spp, self.resolver, avail, arrival)
        if not probs:
            return [(None, 1.0)]
        return [(i, p) for i, p in probs]

    def batch_decide(self, Q, arrivals, u):
        masks = (Q > 0).astype(np.int64) @ self._bits
        todo = np.unique(masks[~self._filled[masks]])
        for m in todo:
            self._fill(int(m))
        cum = self._cum[masks, arrivals]  # (R, width)
        nbr = self._nbr[arrivals]
        total = cum[:, -1]
        # first slot whose cumulative mass exceeds u, ignoring zero-width slots
        prev = np.concatenate([np.zeros((len(arrivals), 1)), cum[:, :-1]], axis=1)
        live = (cum > prev) & (nbr >= 0)
        hit = live & (u[:, None] < cum)
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        # fall back to the last live slot when rounding leaves u above the total
        last_live = live.shape[1] - 1 - np.argmax(live[:, ::-1], axis=1)
        slot = np.where(any_hit, first, last_live)
        partner = nbr[np.arange(len(arrivals)), slot]
        return np.where(total > 0, partner, -1)


class Adversarial(Policy):
    # reads queue 0 wherever the arrival is, so it is not local
    info = PolicyInfo("queue-length", "global")
    name = "adversarial"

    def __init__(self, spp: SppSolution):
        net = spp.net
        if not all(net.has_match(i, i + 1) for i in range(net.n - 1)) or net.k != net.n - 1:
            raise ValueError("the adversarial fixture needs a path 0-1-...-(n-1)")
        if net.n < 6:
            raise ValueError("the adversarial fixture needs n >= 6")

    def decide(self, Q, arrival, u=0.0, discard=False):
        return adversarial_decide(Q, arrival, discard=discard)


POLICY_INFO = {
    "pm": AVAILABILITY_GLOBAL,
    "tp": AVAILABILITY_LOCAL,
    "ttp": AVAILABILITY_LOCAL,
    "lq": QUEUE_LENGTH_LOCAL,
}


def parse_static_spec(spec: str, spp: SppSolution) -> list[list[int]]:
    """Parse ``{"type": [match, ...]}``; a match is an index or an ``[i, j]`` pair."""
    raw = json.loads(spec)
    net = spp.net
    orders: list[list[int]] = [[] for _ in range(net.n)]
    for key, matches in raw.items():
        i = int(key)
        for m in matches:
            a, b = net.matches[int(m)] if isinstance(m, int) else (int(m[0]), int(m[1]))
            if i not in (a, b):
                raise ValueError(f"match {[a, b]} in the order of type {i} does not contain {i}")
            partner = b if a == i else a
            if not spp.reduced.has_match(i, partner):
                raise ValueError(f"match {[a, b]} is not an active match")
            orders[i].append(partner)
    return orders


def make_policy(name: str, spp: SppSolution, resolver: BasisResolver | None = None) -> Policy:
    """Policy by name: pm, tp, ttp, lq, adversarial, or ``static:<json>``."""
    if name == "pm":
        return ProbabilisticMatching(spp, resolver)
    if name in ("tp", "ttp"):
        try:
            tree = spp.require_tree()
        except NotAcyclic as exc:
            raise NotAcyclic(f"{name} is defined only on acyclic networks: {exc}") from None
        return TreePriority(tree) if name == "tp" else TruncatedTreePriority(tree)
    if name == "lq":
        return LongestQueue(spp)
    if name == "adversarial":
        return Adversarial(spp)
    if name.startswith("static:"):
        return StaticPriorityPolicy(parse_static_spec(name[len("static:"):], spp), name=name)
    raise ValueError(f"unknown policy {name!r}")
