"""Static planning problem, general position gap, and fixed-basis re-solves."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .lp import simplex_max
from .network import MatchingNetwork, NotAcyclic, RootedTree, connected_components, root_tree

BASIC_TOL = 1e-9
COND_LIMIT = 1e12


class PlannerError(RuntimeError):
    pass


class GpgViolation(PlannerError):
    """The optimal basic solution is degenerate."""

    def __init__(self, message: str, zero_basic: list[str], z: np.ndarray, s: np.ndarray):
        super().__init__(message)
        self.zero_basic = zero_basic
        self.z = z
        self.s = s


class NumericalInstability(PlannerError):
    pass


class BasisInfeasible(PlannerError):
    pass


def _var_name(var: tuple[str, int]) -> str:
    return f"{var[0]}[{var[1]}]"


@dataclass(frozen=True)
class SppSolution:
    net: MatchingNetwork
    z_star: np.ndarray
    s_star: np.ndarray
    basis: tuple[tuple[str, int], ...]
    epsilon: float
    objective: float
    active_matches: tuple[int, ...]
    redundant_matches: tuple[int, ...]
    under_demanded: tuple[int, ...]
    over_demanded: tuple[int, ...]
    epsilon_i: tuple[float, ...] | None  # only on acyclic reduced networks
    condition: float
    reduced: MatchingNetwork = field(repr=False)
    tree: RootedTree | None = field(default=None, repr=False)

    @property
    def is_acyclic(self) -> bool:
        return self.reduced.is_acyclic()

    def basic_values(self) -> np.ndarray:
        return np.array([self.z_star[j] if kind == "z" else self.s_star[j] for kind, j in self.basis])

    def require_tree(self) -> RootedTree:
        if self.tree is None:
            raise NotAcyclic(
                "policy needs an acyclic, connected reduced network with a unique under-demanded type"
            )
        return self.tree

    def to_dict(self) -> dict:
        return {
            "z_star": self.z_star.tolist(),
            "s_star": self.s_star.tolist(),
            "epsilon": self.epsilon,
            "objective": self.objective,
            "active_matches": list(self.active_matches),
            "active_pairs": [list(self.net.matches[m]) for m in self.active_matches],
            "redundant_matches": list(self.redundant_matches),
            "under_demanded": list(self.under_demanded),
            "over_demanded": list(self.over_demanded),
            "basis": [_var_name(v) for v in self.basis],
            "basis_rule": "first optimal basis reached by Bland's rule from the all-slack basis",
            "epsilon_i": None if self.epsilon_i is None else list(self.epsilon_i),
            "acyclic_reduced": self.is_acyclic,
            "root": None if self.tree is None else self.tree.root,
            "condition_number": self.condition,
        }


def _basis_matrix(net: MatchingNetwork, basis: tuple[tuple[str, int], ...]) -> np.ndarray:
    M = net.matching_matrix()
    cols = []
    for kind, j in basis:
        if kind == "z":
            cols.append(M[:, j])
        else:
            e = np.zeros(net.n)
            e[j] = 1.0
            cols.append(e)
    return np.column_stack(cols)


def _forest_parent_epsilons(
    reduced: MatchingNetwork, z: np.ndarray, s: np.ndarray, active: tuple[int, ...], a_plus: tuple[int, ...]
) -> tuple[float, ...] | None:
    comps = connected_components(reduced.n, reduced.matches)
    if not reduced.is_acyclic():
        return None
    eps = [0.0] * reduced.n
    for comp in comps:
        roots = [i for i in comp if i in a_plus]
        if len(roots) != 1:
            return None
        r = roots[0]
        eps[r] = float(s[r])
        stack, seen = [r], {r}
        while stack:
            u = stack.pop()
            for v in reduced.neighbors(u):
                if v not in seen:
                    seen.add(v)
                    # reduced match index -> full match index
                    m_full = active[reduced.match_index(u, v)]
                    eps[v] = float(z[m_full])
                    stack.append(v)
    return tuple(eps)


def solve_spp(net: MatchingNetwork) -> SppSolution:
    """Optimal basic solution of max r^T z s.t. M z + s = lambda, z, s >= 0.

    Raises :class:`GpgViolation` when a basic variable is not strictly
    positive, naming the offending variables.
    """
    M = net.matching_matrix()
    lam = net.lam_array
    res = simplex_max(net.reward_array, M, lam)
    k = net.k
    basis = tuple(("z", j) if j < k else ("s", j - k) for j in sorted(res.basis))
    z = res.x.copy()
    s = res.slack.copy()
    z[np.abs(z) < 1e-15] = 0.0
    s[np.abs(s) < 1e-15] = 0.0

    basic_vals = {v: (z[v[1]] if v[0] == "z" else s[v[1]]) for v in basis}
    zero = [_var_name(v) for v, val in basic_vals.items() if val <= BASIC_TOL]
    if zero:
        raise GpgViolation(
            f"degenerate optimum: basic variable(s) {', '.join(zero)} are zero; "
            "the general position gap condition fails",
            zero,
            z,
            s,
        )

    MB = _basis_matrix(net, basis)
    cond = float(np.linalg.cond(MB))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NumericalInstability(f"basis condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")

    # re-solve the basic system directly for a clean feasibility residual
    xb = np.linalg.solve(MB, lam)
    for (kind, j), val in zip(basis, xb):
        if kind == "z":
            z[j] = val
        else:
            s[j] = val

    active = tuple(j for kind, j in basis if kind == "z")
    a_plus = tuple(j for kind, j in basis if kind == "s")
    eps = float(min(xb))
    reduced = net.restrict(active)
    eps_i = _forest_parent_epsilons(reduced, z, s, active, a_plus)
    tree = None
    if eps_i is not None and len(a_plus) == 1 and len(connected_components(net.n, reduced.matches)) == 1:
        tree = root_tree(reduced, a_plus[0])

    return SppSolution(
        net=net,
        z_star=z,
        s_star=s,
        basis=basis,
        epsilon=eps,
        objective=float(net.reward_array @ z),
        active_matches=active,
        redundant_matches=tuple(m for m in range(k) if m not in active),
        under_demanded=a_plus,
        over_demanded=tuple(i for i in range(net.n) if i not in a_plus),
        epsilon_i=eps_i,
        condition=cond,
        reduced=reduced,
        tree=tree,
    )


def tree_epsilons(net: MatchingNetwork, tree: RootedTree) -> tuple[float, ...]:
    """Alternating subtree sums ``sum_{j in T(i)} (-1)^{d(i,j)} lambda_j``.

    For over-demanded i this is the fluid rate on the match to its parent;
    at the root it equals the root's slack.
    """
    if not net.is_acyclic():
        raise NotAcyclic("tree_epsilons needs an acyclic network")
    lam = net.lam
    out = []
    for i in range(tree.n):
        total = 0.0
        for j in tree.subtree(i):
            total += lam[j] if (tree.depth[j] - tree.depth[i]) % 2 == 0 else -lam[j]
        out.append(total)
    return tuple(out)


class BasisResolver:
    """Solves ``M_B x = lambda_tilde`` for the optimal basis of a fixed SPP.

    Solutions are memoized per availability pattern (the set of non-empty
    queues). The memo is guarded by a lock so one resolver can be shared by
    threads; identical inputs always produce identical outputs.
    """

    def __init__(self, spp: SppSolution):
        self.spp = spp
        self.basis = spp.basis
        self._lu = lu_factor(_basis_matrix(spp.net, spp.basis))
        self.cache: dict[frozenset[int], tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()

    def solve(self, lam_tilde: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xb = lu_solve(self._lu, np.asarray(lam_tilde, dtype=float))
        z = np.zeros(self.spp.net.k)
        s = np.zeros(self.spp.net.n)
        for (kind, j), val in zip(self.basis, xb):
            if val <= 0:
                raise BasisInfeasible(
                    f"basic variable {_var_name((kind, j))} = {val:.3e} <= 0 under perturbed arrivals"
                )
            if kind == "z":
                z[j] = val
            else:
                s[j] = val
        return z, s

    def perturbed_lambda(self, availability: frozenset[int], epsilon: float) -> np.ndarray:
        lam = self.spp.net.lam_array.copy()
        n = self.spp.net.n
        for i in availability:
            lam[i] += epsilon / n
        return lam


def resolve_with_basis(
    resolver: BasisResolver, availability: frozenset[int] | set[int], epsilon: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-basis solution of SPP at lambda + (epsilon/n) on the non-empty queues."""
    key = frozenset(availability)
    eps = resolver.spp.epsilon if epsilon is None else epsilon
    if epsilon is None or epsilon == resolver.spp.epsilon:
        with resolver._lock:
            hit = resolver.cache.get(key)
        if hit is not None:
            return hit
        out = resolver.solve(resolver.perturbed_lambda(key, eps))
        with resolver._lock:
            return resolver.cache.setdefault(key, out)
    return resolver.solve(resolver.perturbed_lambda(key, eps))


def forest_epsilons(reduced: MatchingNetwork, under_demanded: tuple[int, ...]) -> tuple[float, ...]:
    """Alternating subtree sums on an acyclic reduced network, one root per component.

    Each component is rooted at its under-demanded type; the sums are taken
    directly over the subtree, independently of the simplex.
    """
    if not reduced.is_acyclic():
        raise NotAcyclic("forest_epsilons needs an acyclic network")
    lam = reduced.lam
    parent = [-2] * reduced.n
    for comp in connected_components(reduced.n, reduced.matches):
        roots = [i for i in comp if i in under_demanded]
        if len(roots) != 1:
            raise PlannerError(f"component {comp} has {len(roots)} under-demanded types")
        parent[roots[0]] = -1
        stack = [roots[0]]
        while stack:
            u = stack.pop()
            for v in reduced.neighbors(u):
                if parent[v] == -2:
                    parent[v] = u
                    stack.append(v)
    out = []
    for i in range(reduced.n):
        total, stack = 0.0, [(i, 0)]
        while stack:
            u, d = stack.pop()
            total += lam[u] if d % 2 == 0 else -lam[u]
            stack.extend((v, d + 1) for v in reduced.neighbors(u) if parent[v] == u)
        out.append(total)
    return tuple(out)
