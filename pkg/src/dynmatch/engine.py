"""Discrete-time dynamics Q(t) = A(t) - M D(t) - discards under a greedy policy.

Every period exactly one agent arrives. The policy either matches it with a
waiting agent of a neighbouring type, or the agent waits; arrivals to
under-demanded (and explicitly truncated) types that are not matched at once
are discarded.

Two engines share the same arrival and policy streams:

* :func:`run` steps one replication at a time and is the reference;
* :func:`run_batch` advances many replications in lockstep with numpy and
  gives bit-identical results.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .network import MatchingNetwork
from .planner import SppSolution
from .policies import Action, Policy, PolicyDecision, StaticPriorityPolicy


class IllegalDecision(RuntimeError):
    pass


class MixedParityTruncation(ValueError):
    pass


# -- random streams -----------------------------------------------------------


def _generator(seed: int, replication: int, lane: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(replication, lane))
    return np.random.Generator(np.random.PCG64(ss))


def policy_rng(seed: int, replication: int = 0) -> np.random.Generator:
    """Uniforms for randomized policies; independent of the arrival lane."""
    return _generator(seed, replication, 1)


class AliasTable:
    """Walker/Vose alias table: one uniform per categorical draw."""

    def __init__(self, probs: Sequence[float]):
        p = np.asarray(probs, dtype=float)
        n = len(p)
        scaled = p * n / p.sum()
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            prob[s] = scaled[s]
            alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)
        # leftovers are 1 up to rounding
        self.prob = prob
        self.alias = alias
        self.n = n

    def sample(self, u: np.ndarray | float) -> np.ndarray | int:
        x = np.asarray(u) * self.n
        i = np.minimum(x.astype(np.int64), self.n - 1)
        out = np.where(x - i < self.prob[i], i, self.alias[i])
        return int(out) if np.ndim(out) == 0 else out


class ArrivalStream:
    """Seeded i.i.d. arrival types; one 64-bit draw per period."""

    def __init__(self, lam: Sequence[float], seed: int, replication: int = 0):
        self.seed = int(seed)
        self.replication = int(replication)
        self.table = AliasTable(lam)
        self.rng = _generator(self.seed, self.replication, 0)

    def draw(self) -> int:
        return self.table.sample(self.rng.random())

    def draws(self, count: int) -> np.ndarray:
        return self.table.sample(self.rng.random(count)).astype(np.int64)

    def policy_rng(self) -> np.random.Generator:
        return policy_rng(self.seed, self.replication)


def arrival_matrix(lam: Sequence[float], seed: int, replications: int, T: int) -> np.ndarray:
    """Arrival types of shape (replications, T); row r equals ArrivalStream(seed, r)."""
    out = np.empty((replications, T), dtype=np.int8 if len(lam) < 128 else np.int64)
    for r in range(replications):
        out[r] = ArrivalStream(lam, seed, r).draws(T)
    return out


# -- state and single steps ----------------------------------------------------


@dataclass(frozen=True)
class SimState:
    t: int
    Q: tuple[int, ...]
    A: tuple[int, ...]
    D: tuple[int, ...]
    discarded: tuple[int, ...]
    reward: float = 0.0

    @classmethod
    def empty(cls, net: MatchingNetwork) -> "SimState":
        z = (0,) * net.n
        return cls(0, z, z, (0,) * net.k, z, 0.0)

    @classmethod
    def from_queues(cls, net: MatchingNetwork, Q: Sequence[int]) -> "SimState":
        """A state holding ``Q`` as pre-existing agents (counted as arrivals)."""
        q = tuple(int(x) for x in Q)
        if any(x < 0 for x in q):
            raise ValueError("queue lengths must be non-negative")
        return cls(0, q, q, (0,) * net.k, (0,) * net.n, 0.0)


class MatchingSystem:
    """A network, its planning solution, and the set of discarding queues."""

    def __init__(self, spp: SppSolution, truncated: Iterable[int] = ()):
        self.spp = spp
        self.net = spp.net
        self.truncated = frozenset(truncated)
        self.discarding = frozenset(spp.under_demanded) | self.truncated
        n = self.net.n
        self.discard_mask = np.zeros(n, dtype=bool)
        self.discard_mask[list(self.discarding)] = True
        # match index for (arrival, partner) over active matches, -1 elsewhere
        self.match_table = np.full((n, n), -1, dtype=np.int64)
        for m in spp.active_matches:
            i, j = self.net.matches[m]
            self.match_table[i, j] = self.match_table[j, i] = m
        self.rewards = self.net.reward_array

    def truncate(self, extra: Iterable[int]) -> "MatchingSystem":
        return MatchingSystem(self.spp, self.truncated | frozenset(extra))


def step(state: SimState, arrival: int, decision: PolicyDecision, system: MatchingSystem) -> SimState:
    """Apply one arrival and the policy's decision for it."""
    n = system.net.n
    if not 0 <= arrival < n:
        raise IllegalDecision(f"arrival type {arrival} out of range")
    Q = list(state.Q)
    A = list(state.A)
    D = list(state.D)
    disc = list(state.discarded)
    reward = state.reward
    A[arrival] += 1
    if decision.action is Action.MATCH:
        p = decision.partner
        if p is None or not 0 <= p < n or system.match_table[arrival, p] < 0:
            raise IllegalDecision(f"type {p} is not an active neighbour of {arrival}")
        if Q[p] <= 0:
            raise IllegalDecision(f"queue {p} is empty")
        m = int(system.match_table[arrival, p])
        Q[p] -= 1
        D[m] += 1
        reward += system.rewards[m]
    elif decision.action is Action.DISCARD:
        if arrival not in system.discarding:
            raise IllegalDecision(f"type {arrival} is not truncated and cannot be discarded")
        disc[arrival] += 1
    else:
        if arrival in system.discarding:
            raise IllegalDecision(f"type {arrival} is truncated; unmatched arrivals are discarded")
        Q[arrival] += 1
    return SimState(state.t + 1, tuple(Q), tuple(A), tuple(D), tuple(disc), reward)


def decide(policy: Policy, system: MatchingSystem, Q: Sequence[int], arrival: int, u: float = 0.0) -> PolicyDecision:
    return policy.decide(Q, arrival, u, discard=arrival in system.discarding)


# -- trajectories ---------------------------------------------------------------


def geometric_checkpoints(T: int) -> list[int]:
    """{0} together with {1, 2, 4, ...} below T, and T itself."""
    pts = {0, T}
    t = 1
    while t < T:
        pts.add(t)
        t *= 2
    return sorted(pts)


@dataclass
class Trajectory:
    snapshots: list[SimState]
    queues: np.ndarray | None = field(default=None, repr=False)  # (T+1, n) when recorded

    @property
    def final(self) -> SimState:
        return self.snapshots[-1]

    def at(self, t: int) -> SimState:
        for s in self.snapshots:
            if s.t == t:
                return s
        raise KeyError(t)


def _checkpoint_set(checkpoints: Iterable[int] | None, T: int) -> list[int]:
    pts = geometric_checkpoints(T) if checkpoints is None else sorted(set(int(c) for c in checkpoints))
    if pts and (pts[0] < 0 or pts[-1] > T):
        raise ValueError(f"checkpoints must lie in [0, {T}]")
    return pts


def run(
    system: MatchingSystem,
    policy: Policy,
    T: int,
    stream: ArrivalStream | None = None,
    *,
    arrivals: Sequence[int] | np.ndarray | None = None,
    uniforms: np.random.Generator | Sequence[float] | None = None,
    checkpoints: Iterable[int] | None = None,
    initial: SimState | None = None,
    record_queues: bool = False,
    on_step: Callable[[SimState, int, PolicyDecision], None] | None = None,
) -> Trajectory:
    """Simulate ``T`` periods and return snapshots at the checkpoints.

    Arrivals come from ``stream`` or an explicit sequence. Randomized
    policies draw one uniform per period from ``uniforms`` (by default the
    policy lane of ``stream``).
    """
    if T < 0:
        raise ValueError("horizon must be non-negative")
    if arrivals is None:
        if stream is None:
            raise ValueError("need an arrival stream or an arrival sequence")
        arrivals = stream.draws(T)
    elif len(arrivals) < T:
        raise ValueError(f"{len(arrivals)} arrivals for horizon {T}")
    if policy.randomized:
        if uniforms is None:
            if stream is None:
                raise ValueError("randomized policy needs a uniform stream")
            uniforms = stream.policy_rng()
        if isinstance(uniforms, np.random.Generator):
            uniforms = uniforms.random(T)
    pts = _checkpoint_set(checkpoints, T)
    state = initial or SimState.empty(system.net)
    snaps = []
    hist = np.empty((T + 1, system.net.n), dtype=np.int64) if record_queues else None

    # fast path: mutable lists, snapshots only at checkpoints
    Q = list(state.Q)
    A = list(state.A)
    D = list(state.D)
    disc = list(state.discarded)
    reward = state.reward
    t0 = state.t
    mt = system.match_table
    rew = system.rewards
    discarding = system.discarding
    next_pt = 0
    if pts and pts[0] == 0:
        snaps.append(state)
        next_pt = 1
    if hist is not None:
        hist[0] = Q
    for t in range(T):
        a = int(arrivals[t])
        u = float(uniforms[t]) if policy.randomized else 0.0
        d = policy.decide(Q, a, u, discard=a in discarding)
        A[a] += 1
        if d.action is Action.MATCH:
            p = d.partner
            m = mt[a, p] if p is not None and 0 <= p < len(Q) else -1
            if m < 0 or Q[p] <= 0:
                raise IllegalDecision(f"illegal match of arrival {a} with {p} at t={t0 + t + 1}")
            Q[p] -= 1
            D[m] += 1
            reward += rew[m]
        elif d.action is Action.DISCARD:
            if a not in discarding:
                raise IllegalDecision(f"type {a} cannot be discarded")
            disc[a] += 1
        else:
            if a in discarding:
                raise IllegalDecision(f"type {a} is truncated")
            Q[a] += 1
        if hist is not None:
            hist[t + 1] = Q
        if on_step is not None:
            on_step(SimState(t0 + t + 1, tuple(Q), tuple(A), tuple(D), tuple(disc), reward), a, d)
        if next_pt < len(pts) and pts[next_pt] == t + 1:
            snaps.append(SimState(t0 + t + 1, tuple(Q), tuple(A), tuple(D), tuple(disc), reward))
            next_pt += 1
    return Trajectory(snaps, hist)


# -- batch engine -----------------------------------------------------------------


@dataclass
class BatchResult:
    checkpoints: list[int]
    Q: np.ndarray  # (C, R, n)
    A: np.ndarray  # (C, R, n)
    D: np.ndarray  # (C, R, k)
    discarded: np.ndarray  # (C, R, n)
    reward: np.ndarray  # (C, R)

    def state(self, c: int, r: int) -> SimState:
        return SimState(
            self.checkpoints[c],
            tuple(int(x) for x in self.Q[c, r]),
            tuple(int(x) for x in self.A[c, r]),
            tuple(int(x) for x in self.D[c, r]),
            tuple(int(x) for x in self.discarded[c, r]),
            float(self.reward[c, r]),
        )


def run_batch(
    system: MatchingSystem,
    policy: Policy,
    arrivals: np.ndarray,
    *,
    seed: int | None = None,
    checkpoints: Iterable[int] | None = None,
    chunk: int = 4096,
    on_step: Callable[[int, np.ndarray], None] | None = None,
) -> BatchResult:
    """Run all rows of ``arrivals`` (replications x T) in lockstep.

    Randomized policies take their uniforms from ``policy_rng(seed, r)`` for
    row r, so row r reproduces ``run`` with ``ArrivalStream(lam, seed, r)``.
    ``on_step(t, Q)`` sees the queue matrix after every period.
    """
    arrivals = np.asarray(arrivals)
    R, T = arrivals.shape
    n, k = system.net.n, system.net.k
    pts = _checkpoint_set(checkpoints, T)
    C = len(pts)
    out_Q = np.zeros((C, R, n), dtype=np.int64)
    out_A = np.zeros((C, R, n), dtype=np.int64)
    out_D = np.zeros((C, R, k), dtype=np.int64)
    out_X = np.zeros((C, R, n), dtype=np.int64)
    out_r = np.zeros((C, R))

    Q = np.zeros((R, n), dtype=np.int64)
    A = np.zeros((R, n), dtype=np.int64)
    D = np.zeros((R, k), dtype=np.int64)
    X = np.zeros((R, n), dtype=np.int64)
    reward = np.zeros(R)
    rows = np.arange(R)
    gens = None
    if policy.randomized:
        if seed is None:
            raise ValueError("randomized policy needs the base seed")
        gens = [policy_rng(seed, r) for r in range(R)]

    def record(ci: int) -> None:
        out_Q[ci], out_A[ci], out_D[ci], out_X[ci], out_r[ci] = Q, A, D, X, reward

    ci = 0
    if pts and pts[0] == 0:
        record(0)
        ci = 1
    for start in range(0, T, chunk):
        stop = min(T, start + chunk)
        U = np.stack([g.random(stop - start) for g in gens]) if gens is not None else None
        block = arrivals[:, start:stop].astype(np.int64)
        for s in range(stop - start):
            a = block[:, s]
            partner = policy.batch_decide(Q, a, None if U is None else U[:, s])
            A[rows, a] += 1
            hit = partner >= 0
            if hit.any():
                r_m, p_m = rows[hit], partner[hit]
                m = system.match_table[a[hit], p_m]
                if (m < 0).any() or (Q[r_m, p_m] <= 0).any():
                    raise IllegalDecision(f"illegal batch match at t={start + s + 1}")
                Q[r_m, p_m] -= 1
                D[r_m, m] += 1
                reward[r_m] += system.rewards[m]
            miss = ~hit
            if miss.any():
                r_n, a_n = rows[miss], a[miss]
                drop = system.discard_mask[a_n]
                X[r_n[drop], a_n[drop]] += 1
                Q[r_n[~drop], a_n[~drop]] += 1
            t = start + s + 1
            if on_step is not None:
                on_step(t, Q)
            if ci < C and pts[ci] == t:
                record(ci)
                ci += 1
    return BatchResult(pts, out_Q, out_A, out_D, out_X, out_r)


# -- coupled systems -----------------------------------------------------------------


def _require_static(policy: Policy) -> None:
    if not isinstance(policy, StaticPriorityPolicy):
        raise ValueError("coupled truncation runs need a static priority policy")


def coupled_truncated_run(
    system: MatchingSystem,
    policy: Policy,
    truncate_set: Iterable[int],
    T: int,
    stream: ArrivalStream | None = None,
    *,
    arrivals: Sequence[int] | None = None,
) -> tuple[Trajectory, Trajectory]:
    """Original and truncated systems on one shared arrival sequence.

    The truncated set must lie within one depth-parity class of the rooted
    tree. Both trajectories record the queue vector at every period.
    """
    _require_static(policy)
    tree = system.spp.require_tree()
    trunc = frozenset(int(i) for i in truncate_set)
    parities = {tree.depth[i] % 2 for i in trunc}
    if len(parities) > 1:
        raise MixedParityTruncation(f"truncation set {sorted(trunc)} mixes even and odd depths")
    if arrivals is None:
        if stream is None:
            raise ValueError("need an arrival stream or an arrival sequence")
        arrivals = stream.draws(T)
    orig = run(system, policy, T, arrivals=arrivals, record_queues=True)
    cut = run(system.truncate(trunc), policy, T, arrivals=arrivals, record_queues=True)
    return orig, cut


def path_subsystem_run(
    system: MatchingSystem,
    policy: Policy,
    i: int,
    T: int,
    stream: ArrivalStream | None = None,
    *,
    arrivals: Sequence[int] | None = None,
) -> tuple[Trajectory, Trajectory]:
    """The original path system and the one with queues i+1, ..., n-1 truncated.

    Types must be numbered along the path with the root at n-1. The
    truncated set mixes parities, so this is not a ``coupled_truncated_run``;
    on queues 0..i it behaves like truncating queue i+1 alone.
    """
    _require_static(policy)
    net = system.net
    tree = system.spp.require_tree()
    if tree.root != net.n - 1 or any(tree.parent[j] != j + 1 for j in range(net.n - 1)):
        raise ValueError("path subsystems need the path 0-1-...-(n-1) rooted at n-1")
    if not 0 <= i < net.n - 1:
        raise ValueError(f"subsystem index must be in [0, {net.n - 2}]")
    if arrivals is None:
        if stream is None:
            raise ValueError("need an arrival stream or an arrival sequence")
        arrivals = stream.draws(T)
    orig = run(system, policy, T, arrivals=arrivals, record_queues=True)
    cut = run(system.truncate(range(i + 1, net.n)), policy, T, arrivals=arrivals, record_queues=True)
    return orig, cut


def coupled_pair_run(
    system: MatchingSystem,
    policy: Policy,
    Q0: Sequence[int],
    Q0p: Sequence[int],
    arrival: int,
    u: float = 0.0,
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Successor queue vectors of two states under one shared arrival (and uniform)."""
    net = system.net
    out = []
    for Q in (Q0, Q0p):
        s = SimState.from_queues(net, Q)
        out.append(step(s, arrival, decide(policy, system, s.Q, arrival, u), system).Q)
    return out[0], out[1]


# -- CSV ------------------------------------------------------------------------------


TRAJECTORY_COLUMNS = ("replication", "t", "type_or_match", "kind", "value")


def fmt(x: float | int) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


def trajectory_rows(replication: int, states: Iterable[SimState]):
    for s in states:
        for i, q in enumerate(s.Q):
            yield (replication, s.t, i, "queue", q)
        for i, a in enumerate(s.A):
            yield (replication, s.t, i, "arrivals", a)
        for m, d in enumerate(s.D):
            yield (replication, s.t, m, "matches", d)
        for i, x in enumerate(s.discarded):
            yield (replication, s.t, i, "discards", x)
        yield (replication, s.t, "", "reward", s.reward)


def write_trajectory_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (int, float, np.integer, np.floating)) else v for v in row])
