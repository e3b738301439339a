import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynmatch.builtins import cycle5, path4, path6_fig5
from dynmatch.network import (
    DisconnectedGraph,
    InvalidNetwork,
    NotAcyclic,
    distances,
    load_instance,
    root_tree,
    split_components,
    validate,
)
from dynmatch.randomgen import random_tree_edges


def raw(n, matches, lam=None, rewards=None):
    lam = lam or [1.0 / n] * n
    return {"n": n, "matches": matches, "lambda": lam, "rewards": rewards or [1.0] * len(matches)}


def codes(r):
    with pytest.raises(InvalidNetwork) as exc:
        validate(r)
    return exc.value.codes


def test_path6_is_valid_acyclic_bipartite():
    net = path6_fig5()
    assert net.n == 6 and net.k == 5
    assert net.is_acyclic() and net.is_bipartite()
    assert np.allclose(np.array(net.lam) * 28, [1, 2, 4, 6, 8, 7])


def test_cycle5_is_cyclic_and_not_bipartite():
    net = cycle5()
    assert not net.is_acyclic()
    assert not net.is_bipartite()


def test_single_node_without_edges_is_isolated():
    assert "IsolatedType" in codes(raw(1, [], [1.0], []))


@pytest.mark.parametrize(
    "bad, code",
    [
        (raw(2, [[0, 1]], [0.0, 1.0]), "NonPositiveLambda"),
        (raw(2, [[0, 1]], [0.5, 0.6]), "LambdaNotNormalized"),
        (raw(2, [[0, 1]], [0.5, 0.5], [-1.0]), "NonPositiveReward"),
        (raw(2, [[0, 1], [1, 0]], [0.5, 0.5], [1.0, 1.0]), "ParallelEdge"),
        (raw(4, [[0, 1], [2, 3]]), "DisconnectedGraph"),
    ],
)
def test_validation_errors(bad, code):
    assert code in codes(bad)


def test_all_issues_are_collected():
    c = codes(raw(3, [[0, 1], [0, 1]], [0.0, 0.5, 0.5], [1.0, -2.0]))
    assert {"NonPositiveLambda", "ParallelEdge", "NonPositiveReward", "IsolatedType"} <= set(c)


def test_lambda_tolerance_is_absolute_1e12():
    validate(raw(2, [[0, 1]], [0.5, 0.5 + 5e-13]))
    assert "LambdaNotNormalized" in codes(raw(2, [[0, 1]], [0.5, 0.5 + 5e-12]))


def test_split_components_renormalizes():
    parts = split_components(raw(4, [[0, 1], [2, 3]], [0.1, 0.3, 0.2, 0.4]))
    assert len(parts) == 2
    for _, sub in parts:
        assert abs(sum(sub["lambda"]) - 1) < 1e-12
        validate(sub)


def test_matches_are_normalized_and_indexed():
    net = validate(raw(3, [[1, 0], [2, 1]]))
    assert net.matches == ((0, 1), (1, 2))
    assert net.match_index(1, 0) == 0 and net.match_index(2, 1) == 1


def test_load_instance_round_trip(tmp_path):
    net = path6_fig5()
    p = tmp_path / "net.json"
    p.write_text(json.dumps(net.to_dict()))
    assert load_instance(p) == net


def test_distances_on_paths():
    d4 = distances(path4())
    assert d4[0, 3] == 3
    assert np.all(np.diag(d4) == 0)
    assert (d4 == d4.T).all()
    assert distances(path6_fig5())[1, 4] == 3


def test_root_tree_path4():
    t = root_tree(path4(), 3)
    assert t.root == 3
    assert t.children[3] == (2,) and t.children[2] == (1,) and t.children[1] == (0,)
    assert t.height == 3


def test_root_tree_path6_parity_ancestors():
    t = root_tree(path6_fig5(), 5)
    assert t.height == 5
    # types 1, 3, 4 of the figure are 0, 2, 3 here
    assert set(t.same_parity_ancestors[0]) == {2, 4}
    assert set(t.same_parity_ancestors[2]) == {4}
    assert set(t.same_parity_ancestors[3]) == set()
    for i in [5, 4]:
        assert not t.same_parity_ancestors[i]


def test_star_rooted_at_center():
    net = validate(raw(5, [[0, 1], [0, 2], [0, 3], [0, 4]]))
    t = root_tree(net, 0)
    for leaf in range(1, 5):
        assert t.depth[leaf] == 1 and not t.same_parity_ancestors[leaf]


def test_root_tree_rejects_cycles():
    with pytest.raises(NotAcyclic):
        root_tree(cycle5(), 0)


def test_disconnected_restricted_network_is_rejected_by_root_tree():
    net = path4().restrict([0, 2])
    with pytest.raises(DisconnectedGraph):
        root_tree(net, 3)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 12), seed=st.integers(0, 2**32 - 1), data=st.data())
def test_random_tree_structure(n, seed, data):
    rng = np.random.default_rng(seed)
    edges = random_tree_edges(rng, n)
    net = validate(raw(n, [list(e) for e in edges]))
    root = data.draw(st.integers(0, n - 1))
    t = root_tree(net, root)
    assert sum(len(c) for c in t.children) == n - 1
    for i in range(n):
        for c in t.children[i]:
            assert t.parent[c] == i and t.depth[c] == t.depth[i] + 1
        for j in range(n):
            walk, hit = j, False
            while walk >= 0:
                walk = t.parent[walk]
                hit |= walk == i
            assert hit == t.in_strict_subtree(j, i)
        for j in t.same_parity_ancestors[i]:
            assert j != root and (t.depth[i] - t.depth[j]) % 2 == 0 and t.in_strict_subtree(i, j)
    even, odd = t.parity_classes()
    colors = net.is_bipartite()
    assert colors and even.isdisjoint(odd) and len(even) + len(odd) == n
    for a, b in net.matches:
        assert (a in even) != (b in even)
