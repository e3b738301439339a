"""Lyapunov functions, exact one-step drifts, regret estimation, concentration."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .engine import ArrivalStream, MatchingSystem, arrival_matrix, fmt, geometric_checkpoints, run_batch
from .hindsight import HindsightSolver
from .network import NotAcyclic, RootedTree
from .planner import SppSolution
from .policies import Policy, make_policy

Z95 = 1.96


# -- tree priority Lyapunov function -------------------------------------------------


def tp_alpha(spp: SppSolution, tree: RootedTree | None = None) -> np.ndarray:
    """alpha_i = 1 + (1/eps_i) sum_{j in P(i)} alpha_j (lambda_j - eps_j), ancestors first."""
    tree = tree or spp.require_tree()
    if spp.epsilon_i is None:
        raise NotAcyclic("alpha needs the per-type eps_i of an acyclic reduced network")
    eps = spp.epsilon_i
    lam = spp.net.lam
    alpha = np.ones(tree.n)
    for i in tree.order:  # BFS order: every ancestor comes first
        acc = sum(alpha[j] * (lam[j] - eps[j]) for j in tree.same_parity_ancestors[i])
        alpha[i] = 1.0 + acc / eps[i]
    return alpha


def alpha_upper_bound(spp: SppSolution, tree: RootedTree) -> np.ndarray:
    e = spp.epsilon
    return np.array([(1 + 1 / e) ** max((tree.depth[i] - 1) // 2, 0) for i in range(tree.n)])


def f_matrix(tree: RootedTree) -> np.ndarray:
    """F with (v @ F)[i] = f_i(v) = sum_{j in T^-(i)} (-1)^{d(i,j)+1} v_j."""
    F = np.zeros((tree.n, tree.n))
    for i in range(tree.n):
        for j in tree.strict_subtree(i):
            F[j, i] = 1.0 if (tree.depth[j] - tree.depth[i]) % 2 == 1 else -1.0
    return F


@dataclass
class TpLyapunov:
    """L(Q) = sum_i alpha_i (f_i(Q)^+)^2 over the over-demanded types.

    With ``include_root`` the root term (alpha_r = 1) is added as well; see
    the project notes for why the drift bound needs it.
    """

    tree: RootedTree
    alpha: np.ndarray
    include_root: bool = True
    F: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.F = f_matrix(self.tree)
        w = np.asarray(self.alpha, dtype=float).copy()
        if not self.include_root:
            w[self.tree.root] = 0.0
        self.weights = w

    @classmethod
    def from_spp(cls, spp: SppSolution, include_root: bool = True) -> "TpLyapunov":
        tree = spp.require_tree()
        return cls(tree, tp_alpha(spp, tree), include_root)

    def f(self, Q) -> np.ndarray:
        return np.asarray(Q, dtype=float) @ self.F

    def __call__(self, Q) -> np.ndarray:
        fp = np.maximum(self.f(Q), 0.0)
        return (fp * fp) @ self.weights


def quadratic_lyapunov(spp: SppSolution) -> Callable[[Sequence[int]], float]:
    over = np.array(spp.over_demanded, dtype=np.int64)

    def L(Q) -> float:
        q = np.asarray(Q, dtype=float)[..., over]
        return (q * q).sum(axis=-1)

    return L


def pm_drift_bound(spp: SppSolution, Q) -> float:
    return -2.0 * spp.epsilon / spp.net.n * float(np.sum(Q)) + 1.0


def tp_drift_bound(spp: SppSolution, tree: RootedTree, Q) -> float:
    d = tree.height
    e = spp.epsilon
    return -(e / 2 ** (d - 1)) * float(np.sum(Q)) + spp.net.n * (1 + 1 / e) ** ((d - 1) // 2)


# -- exact drift ----------------------------------------------------------------------


def successor(system: MatchingSystem, Q: Sequence[int], arrival: int, partner: int | None) -> list[int]:
    nxt = list(Q)
    if partner is not None:
        nxt[partner] -= 1
    elif arrival not in system.discarding:
        nxt[arrival] += 1
    return nxt


def exact_drift(system: MatchingSystem, policy: Policy, Q: Sequence[int], functional: Callable) -> float:
    """E[g(Q(t+1)) - g(Q(t)) | Q(t) = Q], enumerating arrival types and policy outcomes."""
    base = float(functional(Q))
    lam = system.net.lam
    total = 0.0
    for j in range(system.net.n):
        for partner, p in policy.distribution(Q, j):
            total += lam[j] * p * (float(functional(successor(system, Q, j, partner))) - base)
    return total


def monte_carlo_drift(
    system: MatchingSystem, policy: Policy, Q: Sequence[int], functional: Callable, samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Sample mean and standard error of the one-step change, for cross-checks."""
    lam = np.asarray(system.net.lam)
    base = float(functional(Q))
    types = rng.choice(len(lam), size=samples, p=lam)
    us = rng.random(samples)
    vals = np.empty(samples)
    for s in range(samples):
        j = int(types[s])
        d = policy.decide(Q, j, float(us[s]), discard=j in system.discarding)
        vals[s] = float(functional(successor(system, Q, j, d.partner))) - base
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def reachable_states(
    system: MatchingSystem,
    policy: Policy,
    count: int,
    max_len: int,
    seed: int,
    min_len: int = 1,
    per_path: int = 1,
) -> np.ndarray:
    """``count`` states reached by simulating the policy from the empty state.

    Each trajectory contributes ``per_path`` states taken at distinct random
    times in [min_len, max_len]; the rows are returned in random order.
    """
    rng = np.random.default_rng(seed)
    per_path = max(1, min(per_path, max_len - min_len + 1))
    paths = -(-count // per_path)
    times = np.stack([rng.choice(np.arange(min_len, max_len + 1), per_path, replace=False) for _ in range(paths)])
    arrivals = arrival_matrix(system.net.lam, seed, paths, int(times.max()))
    out = np.zeros((paths * per_path, system.net.n), dtype=np.int64)
    by_t: dict[int, tuple[list, list]] = {}
    for r in range(paths):
        for k, t in enumerate(times[r]):
            rows, slots = by_t.setdefault(int(t), ([], []))
            rows.append(r)
            slots.append(r * per_path + k)
    by_t = {t: (np.array(rows), np.array(slots)) for t, (rows, slots) in by_t.items()}

    def grab(t: int, Q: np.ndarray) -> None:
        hit = by_t.get(t)
        if hit is not None:
            out[hit[1]] = Q[hit[0]]

    run_batch(system, policy, arrivals, seed=seed, checkpoints=[], on_step=grab)
    return out[rng.permutation(len(out))[:count]]


def connecting_lemma_gap(tree: RootedTree, q: np.ndarray, include_root: bool = True) -> np.ndarray:
    """sum_{E1 & E2} f_i(q) - 2^{-d_r} sum_{A0} q_i; must be >= 0.

    E1 = {f_i > 0}, E2 = {some child queue positive}. The index set is the
    over-demanded types, plus the root when ``include_root``.
    """
    q = np.asarray(q, dtype=float)
    F = f_matrix(tree)
    f = q @ F
    child_pos = np.zeros(q.shape, dtype=bool)
    for i in range(tree.n):
        for c in tree.children[i]:
            child_pos[..., i] |= q[..., c] > 0
    mask = (f > 0) & child_pos
    if not include_root:
        mask[..., tree.root] = False
    over = [i for i in range(tree.n) if i != tree.root]
    return (f * mask).sum(axis=-1) - q[..., over].sum(axis=-1) / 2**tree.height


# -- regret ---------------------------------------------------------------------------


@dataclass
class PolicyRegret:
    policy: str
    mean_regret: np.ndarray
    ci_half: np.ndarray
    mean_total_queue: np.ndarray
    min_path_regret: float  # smallest per-trajectory regret (hindsight dominance check)

    @property
    def sup_regret(self) -> float:
        return float(self.mean_regret.max()) if self.mean_regret.size else 0.0

    @property
    def sup_index(self) -> int:
        return int(np.argmax(self.mean_regret)) if self.mean_regret.size else -1


@dataclass
class RegretReport:
    checkpoints: list[int]
    replications: int
    seed: int
    policies: dict[str, PolicyRegret]
    max_reward: float

    def warnings(self) -> list[str]:
        out = []
        for name, pr in self.policies.items():
            low = np.flatnonzero(pr.mean_regret < -pr.ci_half - 1e-12)
            if low.size:
                out.append(f"{name}: mean regret below -ci at t={[self.checkpoints[i] for i in low]}")
            if pr.min_path_regret < -1e-9:
                out.append(f"{name}: a trajectory beat the hindsight optimum by {-pr.min_path_regret:.3g}")
        return out

    def rows(self):
        for name, pr in self.policies.items():
            for c, t in enumerate(self.checkpoints):
                yield (name, t, pr.mean_regret[c], pr.ci_half[c], pr.mean_total_queue[c], int(c == pr.sup_index))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REGRET_COLUMNS)
            for row in self.rows():
                w.writerow([row[0]] + [fmt(v) for v in row[1:]])

    def final_decade_slope(self, policy: str) -> float:
        return final_decade_slope(self.checkpoints, self.policies[policy].mean_regret)


REGRET_COLUMNS = ("policy", "t", "mean_regret", "ci_half", "mean_total_queue", "sup_regret_flag")


def final_decade_slope(checkpoints: Sequence[int], values: Sequence[float]) -> float:
    """Least-squares slope of values against log t over t in [T/10, T]."""
    t = np.asarray(checkpoints, dtype=float)
    v = np.asarray(values, dtype=float)
    T = t.max()
    sel = (t >= T / 10) & (t > 0)
    if sel.sum() < 2:
        return 0.0
    x = np.log(t[sel])
    return float(np.polyfit(x, v[sel], 1)[0])


def cumulative_counts(arrivals: np.ndarray, checkpoints: Sequence[int], n: int) -> np.ndarray:
    """A(t) at each checkpoint for each row: shape (C, R, n)."""
    R = arrivals.shape[0]
    out = np.zeros((len(checkpoints), R, n), dtype=np.int64)
    acc = np.zeros((R, n), dtype=np.int64)
    prev = 0
    for c, t in enumerate(checkpoints):
        seg = arrivals[:, prev:t]
        for i in range(n):
            acc[:, i] += (seg == i).sum(axis=1)
        prev = t
        out[c] = acc
    return out


def regret_experiment(
    spp: SppSolution,
    policies: Iterable[str | Policy],
    T: int,
    replications: int,
    seed: int,
    checkpoints: Iterable[int] | None = None,
    progress: Callable[[str], None] | None = None,
) -> RegretReport:
    """Common-random-number regret estimates at the checkpoints.

    Each replication draws one arrival path; the hindsight optimum and every
    policy are evaluated on that same path.
    """
    if replications < 2:
        raise ValueError("need at least two replications for a confidence interval")
    net = spp.net
    pts = geometric_checkpoints(T) if checkpoints is None else sorted(set(int(c) for c in checkpoints))
    arrivals = arrival_matrix(net.lam, seed, replications, T)
    counts = cumulative_counts(arrivals, pts, net.n)
    solver = HindsightSolver(net)
    hind = np.array([[solver.value(counts[c, r]) for r in range(replications)] for c in range(len(pts))])
    system = MatchingSystem(spp)
    over = np.array(spp.over_demanded, dtype=np.int64)
    out: dict[str, PolicyRegret] = {}
    for p in policies:
        policy = make_policy(p, spp) if isinstance(p, str) else p
        name = p if isinstance(p, str) else policy.name
        if progress:
            progress(name)
        res = run_batch(system, policy, arrivals, seed=seed, checkpoints=pts)
        reg = hind - res.reward
        mean = reg.mean(axis=1)
        sd = reg.std(axis=1, ddof=1)
        out[name] = PolicyRegret(
            policy=name,
            mean_regret=mean,
            ci_half=Z95 * sd / math.sqrt(replications),
            mean_total_queue=res.Q[:, :, over].sum(axis=2).mean(axis=1),
            min_path_regret=float(reg.min()) if reg.size else 0.0,
        )
    return RegretReport(pts, replications, seed, out, float(max(net.rewards)))


# -- concentration ---------------------------------------------------------------------


@dataclass(frozen=True)
class ConcentrationResult:
    mean: float
    std_error: float
    bound: float
    passed: bool

    def to_dict(self) -> dict:
        return {"mean_Z": self.mean, "std_error": self.std_error, "bound": self.bound, "pass": self.passed}


def concentration_samples(lam: Sequence[float], T: int, replications: int, seed: int, block: int = 100) -> np.ndarray:
    """Z(T) = T^{-1/2} sum_i max_{t<=T} |A_i(t) - lambda_i t| per replication."""
    lam = np.asarray(lam, dtype=float)
    n = len(lam)
    z = np.empty(replications)
    steps = np.arange(1, T + 1)
    for start in range(0, replications, block):
        stop = min(replications, start + block)
        arr = np.stack([ArrivalStream(lam, seed, r).draws(T) for r in range(start, stop)])
        tot = np.zeros(stop - start)
        for i in range(n):
            dev = np.cumsum(arr == i, axis=1) - lam[i] * steps
            tot += np.abs(dev).max(axis=1)
        z[start:stop] = tot / math.sqrt(T)
    return z


def concentration_check(lam: Sequence[float], T: int, replications: int, seed: int) -> ConcentrationResult:
    if T < 1:
        raise ValueError("T must be positive")
    z = concentration_samples(lam, T, replications, seed)
    mean = float(z.mean())
    se = float(z.std(ddof=1) / math.sqrt(len(z))) if len(z) > 1 else 0.0
    bound = 2 * math.sqrt(len(lam))
    return ConcentrationResult(mean, se, bound, mean <= bound + 3 * se)
