import numpy as np
import pytest

from dynmatch.builtins import path4, path_adversarial
from dynmatch.engine import MatchingSystem, arrival_matrix, run, run_batch
from dynmatch.network import NotAcyclic
from dynmatch.planner import solve_spp
from dynmatch.policies import (
    Action,
    Adversarial,
    PolicyDecision,
    adversarial_decide,
    lq_decide,
    make_policy,
    parse_static_spec,
    static_priority_decide,
    tp_decide,
    ttp_decide,
)


@pytest.fixture
def path4_tree(spp_of):
    return spp_of("path4").tree


def test_tp_prefers_child_over_parent(path4_tree):
    d = tp_decide(path4_tree, {1: True}, True, 2)
    assert d == PolicyDecision.match(1)


def test_tp_falls_back_to_parent(path4_tree):
    d = tp_decide(path4_tree, {1: False}, True, 2)
    assert d.action is Action.MATCH and d.partner == 3


def test_tp_root_discards(path4_tree):
    assert tp_decide(path4_tree, {2: False}, False, 3, discard=True).action is Action.DISCARD


def test_ttp_leaf_always_enqueues(path4_tree):
    assert ttp_decide(path4_tree, {}, 0).action is Action.ENQUEUE


def test_ttp_ignores_parent(path4_tree):
    assert ttp_decide(path4_tree, {1: False}, 2).action is Action.ENQUEUE


def test_lq_longest_and_tie_break():
    assert lq_decide({1: 2, 3: 5}, 2).partner == 3
    assert lq_decide({1: 4, 3: 4}, 2).partner == 1
    assert lq_decide({1: 0, 3: 0}, 2).action is Action.ENQUEUE


def test_static_priority_order():
    assert static_priority_decide([3, 1], {1: True, 3: True}, 2).partner == 3
    assert static_priority_decide([3, 1], {1: True, 3: False}, 2).partner == 1


def test_adversarial_rules():
    Q = [0, 1, 0, 1, 0, 0, 0, 0]
    assert adversarial_decide(Q, 2).partner == 1
    assert adversarial_decide([1] + Q[1:], 2).partner == 3
    assert adversarial_decide([0, 0, 0, 1, 0, 0, 0, 0], 2).partner == 3
    assert adversarial_decide([0] * 8, 2).action is Action.ENQUEUE


def test_adversarial_requires_long_path():
    with pytest.raises(ValueError):
        Adversarial(solve_spp(path4()))


def test_tp_and_ttp_need_a_tree(spp_of):
    for name in ("tp", "ttp"):
        with pytest.raises(NotAcyclic):
            make_policy(name, spp_of("cycle5"))


def test_unknown_policy(spp_of):
    with pytest.raises(ValueError):
        make_policy("fifo", spp_of("path4"))


def test_static_spec_reproduces_tp(spp_of):
    spp = spp_of("path4")
    orders = parse_static_spec('{"1": [[0,1],[1,2]], "2": [[1,2],[2,3]], "0": [0], "3": [2]}', spp)
    assert orders == [[1], [0, 2], [1, 3], [2]]
    static = make_policy('static:{"1": [[0,1],[1,2]], "2": [[1,2],[2,3]], "0": [0], "3": [2]}', spp)
    tp = make_policy("tp", spp)
    rng = np.random.default_rng(0)
    for _ in range(500):
        Q = list(rng.integers(0, 3, 4))
        for j in range(4):
            assert static.decide(Q, j) == tp.decide(Q, j)


def test_static_spec_rejects_inactive_match(spp_of):
    with pytest.raises(ValueError):
        parse_static_spec('{"0": [[0, 2]]}', spp_of("path4"))


@pytest.mark.parametrize("name", ["path4", "path6-fig5", "path5-fig10", "cycle5"])
@pytest.mark.parametrize("pol", ["pm", "tp", "ttp", "lq"])
def test_batch_and_scalar_decisions_agree(name, pol, spp_of):
    spp = spp_of(name)
    if pol in ("tp", "ttp") and spp.tree is None:
        pytest.skip("needs a tree")
    policy = make_policy(pol, spp)
    rng = np.random.default_rng(1)
    n = spp.net.n
    Q = rng.integers(0, 3, (10_000, n)) * (rng.random((10_000, n)) < 0.4)
    arr = rng.integers(0, n, 10_000)
    u = rng.random(10_000)
    batch = policy.batch_decide(Q, arr, u)
    for r in range(0, 10_000, 7):
        d = policy.decide(list(Q[r]), int(arr[r]), float(u[r]))
        assert batch[r] == (d.partner if d.action is Action.MATCH else -1)


@pytest.mark.parametrize("name", ["path6-fig5", "cycle5"])
def test_pm_distribution_is_a_probability_vector(name, spp_of):
    spp = spp_of(name)
    pm = make_policy("pm", spp)
    rng = np.random.default_rng(2)
    for _ in range(300):
        Q = list(rng.integers(0, 2, spp.net.n))
        for j in range(spp.net.n):
            dist = pm.distribution(Q, j)
            assert abs(sum(p for _, p in dist) - 1) < 1e-12
            for partner, p in dist:
                assert p > 0
                if partner is not None:
                    assert Q[partner] > 0 and spp.reduced.has_match(j, partner)


def test_pm_path4_weights_follow_resolved_rates(spp_of):
    spp = spp_of("path4")
    pm = make_policy("pm", spp)
    from dynmatch.planner import resolve_with_basis

    z, _ = resolve_with_basis(pm.resolver, frozenset({0, 2}))
    dist = dict(pm.distribution([1, 0, 1, 0], 1))
    assert abs(dist[0] - z[0] / (z[0] + z[1])) < 1e-12
    assert abs(dist[2] - z[1] / (z[0] + z[1])) < 1e-12


def test_pm_empirical_frequencies(spp_of):
    spp = spp_of("path4")
    pm = make_policy("pm", spp)
    Q = np.tile([1, 0, 1, 0], (200_000, 1))
    u = np.random.default_rng(4).random(200_000)
    got = pm.batch_decide(Q, np.full(200_000, 1), u)
    exact = dict(pm.distribution([1, 0, 1, 0], 1))
    assert abs((got == 0).mean() - exact[0]) < 5 * np.sqrt(exact[0] * (1 - exact[0]) / 200_000)


@pytest.mark.parametrize("pol", ["pm", "lq", "tp"])
def test_greedy_exclusivity_short(pol, spp_of):
    spp = spp_of("path6-fig5")
    tr = run(MatchingSystem(spp), make_policy(pol, spp), 5_000, arrivals=arrival_matrix(spp.net.lam, 3, 1, 5_000)[0],
             uniforms=np.random.default_rng(0), record_queues=True)
    Q = tr.queues
    for m in spp.active_matches:
        i, j = spp.net.matches[m]
        assert not np.any((Q[:, i] > 0) & (Q[:, j] > 0))


def test_ttp_is_not_exclusive(spp_of):
    spp = spp_of("path4")
    tr = run(MatchingSystem(spp), make_policy("ttp", spp), 2, arrivals=[2, 1])
    assert tr.final.Q[1] == 1 and tr.final.Q[2] == 1


def test_policy_info_metadata(spp_of):
    spp = spp_of("path4")
    assert make_policy("pm", spp).info.scope == "global"
    assert make_policy("lq", spp).info.granularity == "queue-length"
    for p in ("tp", "ttp"):
        assert make_policy(p, spp).info == make_policy("tp", spp).info
    assert Adversarial(solve_spp(path_adversarial())).info.scope == "global"
