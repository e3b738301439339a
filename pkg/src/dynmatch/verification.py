"""Numerical checks of the structural results, bundled as one report."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .analytics import (
    TpLyapunov,
    alpha_upper_bound,
    connecting_lemma_gap,
    exact_drift,
    pm_drift_bound,
    quadratic_lyapunov,
    reachable_states,
    tp_alpha,
    tp_drift_bound,
)
from .engine import (
    ArrivalStream,
    MatchingSystem,
    arrival_matrix,
    coupled_truncated_run,
    path_subsystem_run,
    run,
)
from .fluid import (
    beta,
    beta_closed_form,
    fluid_drift_check,
    fluid_step,
    FluidState,
    lipschitz_check,
    one_hot,
    reflection_check,
)
from .network import RootedTree
from .planner import SppSolution, tree_epsilons
from .policies import Policy, make_policy

TOL = 1e-9

SCALES = {
    # horizon of exclusivity runs, drift states, consistency pairs, Lipschitz horizon/pairs, coupling horizon
    "quick": dict(excl_T=10_000, states=200, pairs=2_000, lip_T=2_000, lip_pairs=10, couple_T=2_000, fluid_starts=20),
    "full": dict(excl_T=100_000, states=1_000, pairs=10_000, lip_T=10_000, lip_pairs=50, couple_T=10_000, fluid_starts=100),
}


def _result(passed: bool, worst: float, **extra) -> dict:
    return {"pass": bool(passed), "worst": float(worst), **extra}


def spp_checks(spp: SppSolution) -> dict:
    net = spp.net
    resid = float(np.max(np.abs(net.matching_matrix() @ spp.z_star + spp.s_star - net.lam_array)))
    out = {"spp_feasibility": _result(resid <= TOL, resid)}
    if spp.tree is not None:
        te = np.array(tree_epsilons(spp.reduced, spp.tree))
        diff = float(np.max(np.abs(te - np.array(spp.epsilon_i))))
        out["tree_epsilons"] = _result(diff <= TOL, diff)
    return out


def exclusivity_check(system: MatchingSystem, policy: Policy, T: int, seed: int) -> dict:
    tr = run(system, policy, T, ArrivalStream(system.net.lam, seed, 0), record_queues=True, checkpoints=[T])
    Q = tr.queues
    worst = 0
    for m in system.spp.active_matches:
        i, j = system.net.matches[m]
        worst = max(worst, int(np.max(np.minimum(Q[:, i], Q[:, j]))))
    return _result(worst == 0, worst, horizon=T)


def drift_check(
    system: MatchingSystem, policy: Policy, L: Callable, bound: Callable, states: np.ndarray
) -> dict:
    worst = -np.inf
    for Q in states:
        Qt = [int(x) for x in Q]
        worst = max(worst, exact_drift(system, policy, Qt, L) - bound(Qt))
    return _result(worst <= TOL, worst, states=len(states), max_total_queue=int(states.sum(axis=1).max()))


def consistency_check(
    system: MatchingSystem, policy: Policy, pairs: int, seed: int, max_len: int = 3000, per_path: int = 25
) -> dict:
    """One-step l1 non-expansion over random pairs of reachable states and every arrival."""
    A = reachable_states(system, policy, pairs, max_len, seed, per_path=per_path)
    B = reachable_states(system, policy, pairs, max_len, seed + 7919, per_path=per_path)
    worst = -np.inf
    rows = np.arange(pairs)
    for j in range(system.net.n):
        a = np.full(pairs, j, dtype=np.int64)
        nxt = []
        for Q in (A, B):
            p = policy.batch_decide(Q, a, None)
            Qn = Q.copy()
            hit = p >= 0
            Qn[rows[hit], p[hit]] -= 1
            if j not in system.discarding:
                Qn[rows[~hit], j] += 1
            nxt.append(Qn)
        before = np.abs(A - B).sum(axis=1)
        after = np.abs(nxt[0] - nxt[1]).sum(axis=1)
        worst = max(worst, int((after - before).max()))
    return _result(worst <= 0, worst, pairs=pairs)


def fluid_checks(spp: SppSolution, tree: RootedTree, starts: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    lam = spp.net.lam_array
    eps = spp.epsilon
    n = tree.n
    over = np.array([i for i in range(n) if i != tree.root])
    out = {}

    # random starts with Phi(q0) up to 50, run until Phi must have fallen below eps
    q0 = np.zeros((starts, n))
    q0[:, over] = rng.exponential(1.0, (starts, len(over)))
    q0 *= (rng.uniform(0, 50, starts) / np.maximum(q0.sum(axis=1), 1e-12))[:, None]
    horizon = int(math.ceil(50 / eps)) + 10
    out["fluid_drift"] = fluid_drift_check(lam, tree, eps, q0, horizon).to_dict()

    # below the gap: F = 1 - lambda_r + Phi and the closed form for beta
    qs = np.zeros((1000, n))
    qs[:, over] = rng.exponential(1.0, (1000, len(over)))
    qs *= (rng.uniform(0, eps, 1000) / np.maximum(qs.sum(axis=1), 1e-12))[:, None]
    rates = beta(qs, lam, tree)
    gap_F = float(np.max(np.abs(rates.F - (1 - lam[tree.root] + rates.Phi))))
    gap_b = float(np.max(np.abs(rates.beta - beta_closed_form(qs, np.array(spp.epsilon_i), tree))))
    out["fluid_F_identity"] = _result(gap_F <= TOL, gap_F)
    out["fluid_beta_closed_form"] = _result(gap_b <= 1e-12, gap_b)

    # F lower bound and monotonicity on arbitrary states
    qa = np.zeros((2000, n))
    qa[:, over] = rng.exponential(2.0, (2000, len(over)))
    qb = qa * rng.uniform(0, 1, qa.shape)
    Fa, Fb = beta(qa, lam, tree), beta(qb, lam, tree)
    low = float(np.min(Fa.F - (1 - lam[tree.root] + np.minimum(eps, Fa.Phi))))
    mono = float(np.min(Fa.F - Fb.F))
    out["fluid_F_lower_bound"] = _result(low >= -TOL, low)
    out["fluid_F_monotone"] = _result(mono >= -TOL, mono)
    return out


def lipschitz_experiment(spp: SppSolution, tree: RootedTree, pairs: int, T: int, seed: int) -> dict:
    n = spp.net.n
    arr = arrival_matrix(spp.net.lam, seed, pairs, T)
    inc = one_hot(arr, n)  # (T, pairs, n)
    A = np.concatenate([np.zeros((1, pairs, n)), np.cumsum(inc, axis=0)])
    Af = np.arange(T + 1)[:, None, None] * spp.net.lam_array[None, None, :] * np.ones((1, pairs, 1))
    res = lipschitz_check(tree, A, Af, np.zeros((pairs, n)))
    d = res.to_dict()
    d["pass"] = bool(res.passed and res.worst <= 1.0 + TOL)
    d["max_ratio"] = d.pop("worst")
    return d


def fluid_integer_check(system: MatchingSystem, tree: RootedTree, T: int, seed: int) -> dict:
    ttp = make_policy("ttp", system.spp)
    stream = ArrivalStream(system.net.lam, seed, 0)
    arr = stream.draws(T)
    tr = run(system, ttp, T, arrivals=arr, record_queues=True, checkpoints=[T])
    st = FluidState.start(np.zeros(system.net.n))
    inc = one_hot(arr, system.net.n)
    worst = 0.0
    for t in range(T):
        fluid_step(st, inc[t], tree, inplace=True)
        worst = max(worst, float(np.max(np.abs(st.q - tr.queues[t + 1]))))
    refl = reflection_check(tree, inc[:, None, :], np.zeros((1, system.net.n)))
    return {"fluid_integer_ttp": _result(worst == 0.0, worst, horizon=T), "reflection_identity": refl.to_dict()}


def truncation_checks(system: MatchingSystem, T: int, seed: int) -> dict:
    spp = system.spp
    tree = spp.require_tree()
    tp = make_policy("tp", spp)
    even, odd = tree.parity_classes()
    arr = ArrivalStream(system.net.lam, seed, 0).draws(T)
    out = {}
    depth = np.array(tree.depth)
    odd_mask = depth % 2 == 1
    for label, cut in (("even", even - {tree.root}), ("odd", odd)):
        orig, trunc = coupled_truncated_run(system, tp, cut, T, arrivals=arr)
        Q, Qc = orig.queues, trunc.queues
        # truncating one parity class raises the other class and lowers its own
        up = ~odd_mask if label == "odd" else odd_mask
        worst = max(int(np.max(Q[:, up] - Qc[:, up], initial=0)), int(np.max(Qc[:, ~up] - Q[:, ~up], initial=0)))
        out[f"truncate_{label}_depth"] = _result(worst <= 0, worst, truncated=sorted(cut), horizon=T)
    n = system.net.n
    is_path = tree.root == n - 1 and all(tree.parent[j] == j + 1 for j in range(n - 1))
    if is_path:
        worst = 0
        worst_equiv = 0
        for i in range(n - 1):
            orig, sub = path_subsystem_run(system, tp, i, T, arrivals=arr)
            _, single = coupled_truncated_run(system, tp, [i + 1], T, arrivals=arr)
            Q, Qs = orig.queues[:, : i + 1], sub.queues[:, : i + 1]
            same = (np.arange(i + 1) % 2) == ((i + 1) % 2)
            worst = max(worst, int(np.max(Qs[:, same] - Q[:, same], initial=0)))
            worst = max(worst, int(np.max(Q[:, ~same] - Qs[:, ~same], initial=0)))
            worst_equiv = max(worst_equiv, int(np.max(np.abs(single.queues[:, : i + 1] - Qs))))
        out["path_subsystems"] = _result(worst <= 0, worst, systems=n - 1, horizon=T)
        out["path_subsystem_single_cut"] = _result(worst_equiv == 0, worst_equiv)
    return out


def tp_structure_checks(system: MatchingSystem, tree: RootedTree, T: int, seed: int) -> dict:
    spp = system.spp
    alpha = tp_alpha(spp, tree)
    ub = alpha_upper_bound(spp, tree)
    first = [tree.root, *tree.children[tree.root]]
    out = {
        "alpha_upper_bound": _result(bool(np.all(alpha <= ub * (1 + 1e-12))), float(np.max(alpha / ub))),
        "alpha_top_levels": _result(bool(np.all(alpha[first] == 1.0)), float(np.max(np.abs(alpha[first] - 1)))),
    }
    L = TpLyapunov(tree, alpha)
    tr = run(system, make_policy("tp", spp), T, ArrivalStream(spp.net.lam, seed, 0), record_queues=True, checkpoints=[T])
    f = tr.queues @ L.F
    over = [i for i in range(tree.n) if i != tree.root]
    step = float(np.max(np.abs(np.diff(f[:, over], axis=0)))) if T else 0.0
    out["f_step_bound"] = _result(step <= 1.0, step, horizon=T)
    rng = np.random.default_rng(seed)
    q = rng.integers(0, 6, (10_000, tree.n)).astype(float)
    q[:, tree.root] = 0.0
    gap = float(np.min(connecting_lemma_gap(tree, q)))
    out["connecting_lemma"] = _result(gap >= -TOL, gap, samples=len(q))
    return out


def verify(spp: SppSolution, scale: str = "full", seed: int = 0, progress: Callable[[str], None] | None = None) -> dict:
    """Run every check that applies to the instance; ``report["pass"]`` is the conjunction."""
    cfg = SCALES[scale]
    system = MatchingSystem(spp)
    checks: dict[str, dict] = {}

    def note(name: str) -> None:
        if progress:
            progress(name)

    note("spp")
    checks.update(spp_checks(spp))

    names = ["pm", "lq"] + (["tp", "ttp"] if spp.tree is not None else [])
    pols = {p: make_policy(p, spp) for p in names}
    note("exclusivity")
    for p in ("pm", "tp", "lq"):
        if p in pols:
            checks[f"exclusivity_{p}"] = exclusivity_check(system, pols[p], cfg["excl_T"], seed)

    note("drift")
    pm_states = reachable_states(system, pols["pm"], cfg["states"], 5_000, seed + 1)
    checks["drift_pm"] = drift_check(
        system, pols["pm"], quadratic_lyapunov(spp), lambda Q: pm_drift_bound(spp, Q), pm_states
    )

    note("consistency")
    for p in ("tp", "ttp", "lq"):
        if p in pols:
            checks[f"consistency_{p}"] = consistency_check(system, pols[p], cfg["pairs"], seed + 2)

    tree = spp.tree
    if tree is not None:
        tp_states = reachable_states(system, pols["tp"], cfg["states"], 5_000, seed + 3)
        L = TpLyapunov.from_spp(spp)
        checks["drift_tp"] = drift_check(system, pols["tp"], L, lambda Q: tp_drift_bound(spp, tree, Q), tp_states)
        checks.update(tp_structure_checks(system, tree, cfg["couple_T"], seed + 4))
        note("fluid")
        checks.update(fluid_checks(spp, tree, cfg["fluid_starts"], seed + 5))
        checks["lipschitz"] = lipschitz_experiment(spp, tree, cfg["lip_pairs"], cfg["lip_T"], seed + 6)
        checks.update(fluid_integer_check(system, tree, cfg["couple_T"], seed + 7))
        note("coupling")
        checks.update(truncation_checks(system, cfg["couple_T"], seed + 8))

    return {"pass": all(c["pass"] for c in checks.values()), "scale": scale, "seed": seed, "checks": checks}
