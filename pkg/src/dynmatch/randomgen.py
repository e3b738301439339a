"""Random instances for property checks."""

from __future__ import annotations

import itertools

import numpy as np

from .network import MatchingNetwork, root_tree, validate


def random_tree_edges(rng: np.random.Generator, n: int) -> list[tuple[int, int]]:
    """Uniform attachment tree with shuffled labels."""
    perm = rng.permutation(n)
    edges = []
    for v in range(1, n):
        u = int(rng.integers(0, v))
        a, b = int(perm[u]), int(perm[v])
        edges.append((min(a, b), max(a, b)))
    return sorted(edges)


def random_acyclic_network(rng: np.random.Generator, n: int) -> MatchingNetwork:
    """Random tree with i.i.d. arrival weights and rewards (GPG not guaranteed)."""
    edges = random_tree_edges(rng, n)
    w = rng.uniform(0.2, 1.0, n)
    return validate(
        {
            "n": n,
            "matches": [list(e) for e in edges],
            "lambda": list(w / w.sum()),
            "rewards": list(rng.uniform(0.5, 3.0, len(edges))),
        }
    )


def planted_tree_network(rng: np.random.Generator, n: int) -> tuple[MatchingNetwork, int]:
    """Tree whose planning optimum puts every edge in the basis and one root slack.

    Per-node rates eps_i > 0 are drawn first and lambda_i = eps_i + sum of the
    children's eps. Rewards come from a dual y >= 0 with y_root = 0, so the
    planted basis is optimal. Returns the network and the root.
    """
    edges = random_tree_edges(rng, n)
    root = int(rng.integers(0, n))
    net0 = validate({"n": n, "matches": [list(e) for e in edges], "lambda": [1.0 / n] * n, "rewards": [1.0] * len(edges)})
    tree = root_tree(net0, root)
    eps = rng.uniform(0.2, 1.0, n)
    lam = np.array([eps[i] + sum(eps[c] for c in tree.children[i]) for i in range(n)])
    lam /= lam.sum()
    y = rng.uniform(0.5, 2.0, n)
    y[root] = 0.0
    rewards = [float(y[i] + y[j]) for i, j in edges]
    net = validate({"n": n, "matches": [list(e) for e in edges], "lambda": list(lam), "rewards": rewards})
    return net, root


def random_connected_network(rng: np.random.Generator, n: int, extra: float = 0.3) -> MatchingNetwork:
    """Spanning tree plus each remaining pair with probability ``extra``."""
    edges = set(random_tree_edges(rng, n))
    for e in itertools.combinations(range(n), 2):
        if e not in edges and rng.random() < extra:
            edges.add(e)
    edges = sorted(edges)
    w = rng.uniform(0.2, 1.0, n)
    return validate(
        {
            "n": n,
            "matches": [list(e) for e in edges],
            "lambda": list(w / w.sum()),
            "rewards": list(rng.uniform(0.5, 3.0, len(edges))),
        }
    )
