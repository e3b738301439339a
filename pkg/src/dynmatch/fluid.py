"""Truncated tree priority under fractional arrivals.

Nodes are visited children-first. Each node matches its new arrival mass
against the mass waiting in its children (ascending child index); what is
left joins the node's own queue, or is discarded at the root. With one-hot
integer arrivals this is exactly the integer TTP step.

All arrays carry an optional leading batch dimension so that many
trajectories advance together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import RootedTree

TOL = 1e-9


class NegativeArrival(ValueError):
    pass


@dataclass
class FluidState:
    q: np.ndarray  # (..., n)
    A: np.ndarray  # (..., n) cumulative arrivals
    D: np.ndarray  # (..., n) cumulative matches on the match from i to its parent (0 at root)
    q0: np.ndarray
    discarded: np.ndarray  # (...,) root discards

    @classmethod
    def start(cls, q0: np.ndarray) -> "FluidState":
        q0 = np.array(q0, dtype=float)
        if np.any(q0 < 0):
            raise ValueError("queue levels must be non-negative")
        z = np.zeros_like(q0)
        return cls(q0.copy(), z.copy(), z.copy(), q0.copy(), np.zeros(q0.shape[:-1]))

    def R(self, tree: RootedTree) -> np.ndarray:
        """R_i = q_i(0) + A_i - sum over children j of D_{m(j,i)}."""
        child_sum = np.zeros_like(self.A)
        for i in range(tree.n):
            for c in tree.children[i]:
                child_sum[..., i] += self.D[..., c]
        return self.q0 + self.A - child_sum

    def copy(self) -> "FluidState":
        return FluidState(self.q.copy(), self.A.copy(), self.D.copy(), self.q0.copy(), self.discarded.copy())


def fluid_step(state: FluidState, arrivals: np.ndarray, tree: RootedTree, inplace: bool = False) -> FluidState:
    """One period of fluid TTP. ``D[..., c]`` is indexed by the child c of each match."""
    a = np.asarray(arrivals, dtype=float)
    if np.any(a < 0):
        raise NegativeArrival("arrival mass must be non-negative")
    s = state if inplace else state.copy()
    q, D = s.q, s.D
    s.A += a
    for i in tree.postorder():
        x = a[..., i].copy()
        for c in tree.children[i]:
            take = np.minimum(x, q[..., c])
            q[..., c] -= take
            D[..., c] += take
            x -= take
        if tree.parent[i] < 0:
            s.discarded += x
        else:
            q[..., i] += x
    return s


@dataclass(frozen=True)
class FluidRates:
    beta: np.ndarray
    F: np.ndarray
    Phi: np.ndarray


def beta(q: np.ndarray, lam: np.ndarray, tree: RootedTree) -> FluidRates:
    """beta_i = min(lambda_i, sum_{j in C(i)} (lambda_j + q_j - beta_j)), evaluated leaves up."""
    q = np.asarray(q, dtype=float)
    lam = np.asarray(lam, dtype=float)
    b = np.zeros_like(q)
    for i in tree.postorder():
        kids = tree.children[i]
        if kids:
            avail = sum(lam[c] + q[..., c] - b[..., c] for c in kids)
            b[..., i] = np.minimum(lam[i], avail)
    over = [i for i in range(tree.n) if i != tree.root]
    F = b[..., tree.root] + 2.0 * b[..., over].sum(axis=-1)
    Phi = q[..., over].sum(axis=-1)
    return FluidRates(b, F, Phi)


def beta_closed_form(q: np.ndarray, eps_i: np.ndarray, tree: RootedTree) -> np.ndarray:
    """sum_{j in C(i)} eps_j - sum_{j in T^-(i)} (-1)^{d(i,j)} q_j; valid when Phi(q) <= eps."""
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    for i in range(tree.n):
        val = sum(eps_i[c] for c in tree.children[i])
        for j in tree.strict_subtree(i):
            sign = 1.0 if (tree.depth[j] - tree.depth[i]) % 2 == 0 else -1.0
            val = val - sign * q[..., j]
        out[..., i] = val
    return out


def phi(q: np.ndarray, tree: RootedTree) -> np.ndarray:
    over = [i for i in range(tree.n) if i != tree.root]
    return np.asarray(q)[..., over].sum(axis=-1)


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    worst: float  # smallest slack, or largest tightness ratio for ratio checks
    detail: dict

    def to_dict(self) -> dict:
        return {"pass": self.passed, "worst": float(self.worst), **self.detail}


def fluid_drift_check(lam: np.ndarray, tree: RootedTree, eps: float, q0: np.ndarray, horizon: int) -> CheckResult:
    """Phi(q(t+1)) <= (Phi(q(t)) - eps)^+ under fluid arrivals A(t) = t lambda.

    ``q0`` may be a batch of starting points (B, n). The slack is the
    right-hand side minus the left-hand side; it must stay >= -1e-9.
    """
    lam = np.asarray(lam, dtype=float)
    st = FluidState.start(q0)
    worst = np.inf
    p = phi(st.q, tree)
    for _ in range(horizon):
        fluid_step(st, np.broadcast_to(lam, st.q.shape), tree, inplace=True)
        p_next = phi(st.q, tree)
        worst = min(worst, float(np.min(np.maximum(p - eps, 0.0) - p_next)))
        p = p_next
    return CheckResult(worst >= -TOL, worst, {"horizon": horizon})


def lipschitz_check(tree: RootedTree, A: np.ndarray, A_prime: np.ndarray, q0: np.ndarray) -> CheckResult:
    """|Phi(q(t)) - Phi(q'(t))| <= 2(d_r+1) sum_i max_{s<=t} |A_i(s) - A'_i(s)| for every t.

    ``A`` and ``A_prime`` are cumulative arrival paths of shape (T+1, ..., n)
    starting at zero. Reports the largest LHS/RHS ratio seen.
    """
    A = np.asarray(A, dtype=float)
    Ap = np.asarray(A_prime, dtype=float)
    T = A.shape[0] - 1
    s1 = FluidState.start(np.broadcast_to(q0, A.shape[1:]))
    s2 = FluidState.start(np.broadcast_to(q0, A.shape[1:]))
    c = 2.0 * (tree.height + 1)
    run_max = np.zeros(A.shape[1:])
    worst_ratio = 0.0
    worst_gap = -np.inf
    for t in range(1, T + 1):
        fluid_step(s1, A[t] - A[t - 1], tree, inplace=True)
        fluid_step(s2, Ap[t] - Ap[t - 1], tree, inplace=True)
        run_max = np.maximum(run_max, np.abs(A[t] - Ap[t]))
        lhs = np.abs(phi(s1.q, tree) - phi(s2.q, tree))
        rhs = c * run_max.sum(axis=-1)
        worst_gap = max(worst_gap, float(np.max(lhs - rhs)))
        pos = rhs > 0
        if np.any(pos):
            worst_ratio = max(worst_ratio, float(np.max(lhs[pos] / rhs[pos])))
    return CheckResult(worst_gap <= TOL, worst_ratio, {"horizon": T, "max_violation": worst_gap})


def reflection_check(tree: RootedTree, increments: np.ndarray, q0: np.ndarray) -> CheckResult:
    """Reflection identity for the children of every node along a fluid path.

    sum_{C(i)} q_j(t) = sum_{C(i)} R_j(t) - A_i(t) + max_{s<=t} [A_i(s) - sum_{C(i)} R_j(s)]^+,
    together with R_j = q_j + D_{m(j,P(j))} off the root. ``increments`` has shape (T, ..., n).
    """
    st = FluidState.start(q0)
    n = tree.n
    over = [i for i in range(n) if i != tree.root]
    run_max = np.zeros(st.q.shape)  # per node i: running max of [A_i - sum_C R_j]^+
    worst = 0.0
    for t in range(increments.shape[0]):
        fluid_step(st, increments[t], tree, inplace=True)
        R = st.R(tree)
        # at the root the unmatched arrivals are discarded, so only over-demanded nodes qualify
        gap = np.abs(R - (st.q + st.D))[..., over]
        worst = max(worst, float(np.max(gap, initial=0.0)))
        for i in range(n):
            kids = list(tree.children[i])
            if not kids:
                continue
            sumR = R[..., kids].sum(axis=-1)
            run_max[..., i] = np.maximum(run_max[..., i], np.maximum(st.A[..., i] - sumR, 0.0))
            rhs = sumR - st.A[..., i] + run_max[..., i]
            lhs = st.q[..., kids].sum(axis=-1)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return CheckResult(worst <= TOL, worst, {"horizon": int(increments.shape[0])})


def one_hot(arrivals: np.ndarray, n: int) -> np.ndarray:
    """(..., T) integer types -> (T, ..., n) unit increments."""
    arr = np.asarray(arrivals)
    out = np.zeros(arr.shape + (n,))
    np.put_along_axis(out, arr[..., None].astype(np.int64), 1.0, axis=-1)
    return np.moveaxis(out, -2, 0)
