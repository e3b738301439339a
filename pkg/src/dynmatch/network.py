"""Matching-network instances and rooted-tree structure.

Types are 0-based integers ``0..n-1``. A match is an unordered pair of
distinct types stored normalized as ``(i, j)`` with ``i < j``; its position
in :attr:`MatchingNetwork.matches` is its match index.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

LAMBDA_TOL = 1e-12


class NetworkError(ValueError):
    """A single structural problem with a network description."""

    code = "NetworkError"


class DisconnectedGraph(NetworkError):
    code = "DisconnectedGraph"


class IsolatedType(NetworkError):
    code = "IsolatedType"


class NonPositiveLambda(NetworkError):
    code = "NonPositiveLambda"


class LambdaNotNormalized(NetworkError):
    code = "LambdaNotNormalized"


class NonPositiveReward(NetworkError):
    code = "NonPositiveReward"


class ParallelEdge(NetworkError):
    code = "ParallelEdge"


class MalformedNetwork(NetworkError):
    code = "MalformedNetwork"


class NotAcyclic(NetworkError):
    code = "NotAcyclic"


class InvalidNetwork(ValueError):
    """Raised by :func:`validate`; carries every problem found."""

    def __init__(self, issues: list[NetworkError]):
        self.issues = issues
        lines = "; ".join(f"{e.code}: {e}" for e in issues)
        super().__init__(lines)

    @property
    def codes(self) -> list[str]:
        return [e.code for e in self.issues]


def normalize_pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class MatchingNetwork:
    n: int
    matches: tuple[tuple[int, int], ...]
    lam: tuple[float, ...]
    rewards: tuple[float, ...]
    _index: dict[tuple[int, int], int] = field(init=False, repr=False, compare=False)
    _neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        index = {pair: m for m, pair in enumerate(self.matches)}
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.matches:
            nbrs[i].append(j)
            nbrs[j].append(i)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_neighbors", tuple(tuple(sorted(v)) for v in nbrs))

    @property
    def k(self) -> int:
        return len(self.matches)

    def match_index(self, i: int, j: int) -> int:
        return self._index[normalize_pair(i, j)]

    def has_match(self, i: int, j: int) -> bool:
        return normalize_pair(i, j) in self._index

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._neighbors[i]

    @property
    def lam_array(self) -> np.ndarray:
        return np.asarray(self.lam, dtype=float)

    @property
    def reward_array(self) -> np.ndarray:
        return np.asarray(self.rewards, dtype=float)

    def matching_matrix(self) -> np.ndarray:
        """The n x k incidence matrix M."""
        M = np.zeros((self.n, self.k))
        for m, (i, j) in enumerate(self.matches):
            M[i, m] = 1.0
            M[j, m] = 1.0
        return M

    def is_acyclic(self) -> bool:
        # connected graphs only reach here; forests satisfy |E| = |V| - #components
        return self.k == self.n - len(connected_components(self.n, self.matches))

    def is_bipartite(self) -> bool:
        return two_coloring(self.n, self.matches) is not None

    def restrict(self, active: Iterable[int]) -> "MatchingNetwork":
        """Network on the same types keeping only the listed match indices."""
        keep = sorted(set(active))
        return MatchingNetwork(
            n=self.n,
            matches=tuple(self.matches[m] for m in keep),
            lam=self.lam,
            rewards=tuple(self.rewards[m] for m in keep),
        )

    def with_lambda(self, lam: Iterable[float]) -> "MatchingNetwork":
        return MatchingNetwork(self.n, self.matches, tuple(float(x) for x in lam), self.rewards)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "matches": [list(p) for p in self.matches],
            "lambda": list(self.lam),
            "rewards": list(self.rewards),
        }


def connected_components(n: int, edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        comp, stack = [], [s]
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def two_coloring(n: int, edges: Iterable[tuple[int, int]]) -> list[int] | None:
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    color = [-1] * n
    for s in range(n):
        if color[s] >= 0:
            continue
        color[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    queue.append(v)
                elif color[v] == color[u]:
                    return None
    return color


def validate(raw: dict[str, Any]) -> MatchingNetwork:
    """Build a :class:`MatchingNetwork` from a raw description.

    Collects every problem before raising :class:`InvalidNetwork`, so a
    caller sees the full list at once.
    """
    issues: list[NetworkError] = []
    try:
        n = int(raw["n"])
        pairs = [tuple(int(x) for x in p) for p in raw["matches"]]
        lam = [float(x) for x in raw["lambda"]]
        rewards = [float(x) for x in raw["rewards"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidNetwork([MalformedNetwork(f"missing or non-numeric field: {exc}")]) from None

    if n < 1:
        raise InvalidNetwork([MalformedNetwork("n must be >= 1")])
    if len(lam) != n:
        issues.append(MalformedNetwork(f"lambda has length {len(lam)}, expected n={n}"))
    if len(rewards) != len(pairs):
        issues.append(
            MalformedNetwork(f"rewards has length {len(rewards)}, expected {len(pairs)} matches")
        )

    matches: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for m, p in enumerate(pairs):
        if len(p) != 2 or not all(0 <= x < n for x in p):
            issues.append(MalformedNetwork(f"match {m} = {list(p)} is not a pair of types in [0, {n})"))
            continue
        if p[0] == p[1]:
            issues.append(MalformedNetwork(f"match {m} is a self-loop on type {p[0]}"))
            continue
        pair = normalize_pair(*p)
        if pair in seen:
            issues.append(ParallelEdge(f"match {m} duplicates pair {list(pair)}"))
            continue
        seen.add(pair)
        matches.append(pair)

    for i, x in enumerate(lam):
        if not x > 0:
            issues.append(NonPositiveLambda(f"lambda[{i}] = {x} is not strictly positive"))
    if lam and abs(sum(lam) - 1.0) > LAMBDA_TOL:
        issues.append(LambdaNotNormalized(f"sum(lambda) = {sum(lam)!r}, expected 1"))
    for m, x in enumerate(rewards):
        if not x > 0:
            issues.append(NonPositiveReward(f"rewards[{m}] = {x} is not strictly positive"))

    touched = {i for pair in matches for i in pair}
    for i in range(n):
        if i not in touched:
            issues.append(IsolatedType(f"type {i} participates in no match"))

    comps = connected_components(n, matches)
    if len(comps) > 1 and not any(isinstance(e, IsolatedType) for e in issues):
        issues.append(
            DisconnectedGraph(
                f"graph has {len(comps)} components {comps}; split it with "
                "split_components() and analyze each component separately"
            )
        )

    if issues:
        raise InvalidNetwork(issues)
    return MatchingNetwork(n, tuple(matches), tuple(lam), tuple(rewards))


def split_components(raw: dict[str, Any]) -> list[tuple[list[int], dict[str, Any]]]:
    """Split a raw description into per-component raw descriptions.

    Arrival rates are renormalized within each component. Returns
    ``(original_type_ids, raw_component)`` pairs.
    """
    n = int(raw["n"])
    pairs = [normalize_pair(int(a), int(b)) for a, b in raw["matches"]]
    out = []
    for comp in connected_components(n, pairs):
        relabel = {old: new for new, old in enumerate(comp)}
        sub_m, sub_r = [], []
        for (a, b), r in zip(pairs, raw["rewards"]):
            if a in relabel:
                sub_m.append([relabel[a], relabel[b]])
                sub_r.append(float(r))
        lam = [float(raw["lambda"][i]) for i in comp]
        total = sum(lam)
        out.append(
            (comp, {"n": len(comp), "matches": sub_m, "lambda": [x / total for x in lam], "rewards": sub_r})
        )
    return out


def load_instance(path: str | Path) -> MatchingNetwork:
    with open(path) as fh:
        return validate(json.load(fh))


def distances(net: MatchingNetwork) -> np.ndarray:
    """All-pairs unweighted shortest-path distances (BFS from every node)."""
    n = net.n
    d = np.full((n, n), -1, dtype=int)
    for s in range(n):
        d[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in net.neighbors(u):
                if d[s, v] < 0:
                    d[s, v] = d[s, u] + 1
                    queue.append(v)
    return d


@dataclass(frozen=True)
class RootedTree:
    root: int
    parent: tuple[int, ...]  # -1 at the root
    children: tuple[tuple[int, ...], ...]
    depth: tuple[int, ...]
    order: tuple[int, ...]  # BFS order from the root
    over_demanded: frozenset[int]
    same_parity_ancestors: tuple[frozenset[int], ...]

    @property
    def n(self) -> int:
        return len(self.parent)

    @property
    def height(self) -> int:
        """d_r: depth of the tree rooted at r."""
        return max(self.depth)

    def postorder(self) -> tuple[int, ...]:
        """Every node before its parent."""
        return tuple(reversed(self.order))

    def ancestors(self, i: int) -> list[int]:
        out = []
        while self.parent[i] >= 0:
            i = self.parent[i]
            out.append(i)
        return out

    def subtree(self, i: int) -> list[int]:
        """T(i), including i."""
        out, stack = [], [i]
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(self.children[u])
        return sorted(out)

    def strict_subtree(self, i: int) -> list[int]:
        """T^-(i) = T(i) without i."""
        return [j for j in self.subtree(i) if j != i]

    def in_strict_subtree(self, j: int, i: int) -> bool:
        return i in self.ancestors(j)

    def distance(self, i: int, j: int) -> int:
        """Tree distance via the lowest common ancestor."""
        ai = [i, *self.ancestors(i)]
        aj = set([j, *self.ancestors(j)])
        for u in ai:
            if u in aj:
                return self.depth[i] + self.depth[j] - 2 * self.depth[u]
        raise ValueError("nodes are not in the same tree")

    def parity_classes(self) -> tuple[frozenset[int], frozenset[int]]:
        even = frozenset(i for i in range(self.n) if self.depth[i] % 2 == 0)
        odd = frozenset(i for i in range(self.n) if self.depth[i] % 2 == 1)
        return even, odd


def root_tree(
    net: MatchingNetwork,
    under_demanded: int,
    over_demanded: Iterable[int] | None = None,
) -> RootedTree:
    """Orient an acyclic connected network as a tree rooted at ``under_demanded``.

    ``over_demanded`` defaults to every other node, which is the situation
    on an acyclic reduced network with a single under-demanded type.
    """
    if len(connected_components(net.n, net.matches)) != 1:
        raise DisconnectedGraph("root_tree needs a connected network")
    if not net.is_acyclic():
        raise NotAcyclic(f"network with n={net.n} and {net.k} matches contains a cycle")
    r = under_demanded
    parent = [-1] * net.n
    depth = [0] * net.n
    order = [r]
    seen = {r}
    queue = deque([r])
    while queue:
        u = queue.popleft()
        for v in net.neighbors(u):
            if v not in seen:
                seen.add(v)
                parent[v] = u
                depth[v] = depth[u] + 1
                order.append(v)
                queue.append(v)
    children: list[list[int]] = [[] for _ in range(net.n)]
    for v, p in enumerate(parent):
        if p >= 0:
            children[p].append(v)
    a0 = frozenset(over_demanded) if over_demanded is not None else frozenset(set(range(net.n)) - {r})

    spa = []
    for i in range(net.n):
        anc = []
        u, dist = i, 0
        while parent[u] >= 0:
            u = parent[u]
            dist += 1
            if dist % 2 == 0 and u in a0:
                anc.append(u)
        spa.append(frozenset(anc))

    return RootedTree(
        root=r,
        parent=tuple(parent),
        children=tuple(tuple(sorted(c)) for c in children),
        depth=tuple(depth),
        order=tuple(order),
        over_demanded=a0,
        same_parity_ancestors=tuple(spa),
    )
