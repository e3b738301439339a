import numpy as np
import pytest

from dynmatch.engine import ArrivalStream, MatchingSystem, run
from dynmatch.fluid import (
    FluidState,
    NegativeArrival,
    beta,
    beta_closed_form,
    fluid_drift_check,
    fluid_step,
    lipschitz_check,
    one_hot,
    phi,
    reflection_check,
)
from dynmatch.planner import solve_spp
from dynmatch.policies import make_policy
from dynmatch.randomgen import planted_tree_network


def test_fixed_point_at_zero(spp_of):
    spp = spp_of("path6-fig5")
    st = FluidState.start(np.zeros(6))
    for _ in range(50):
        fluid_step(st, spp.net.lam_array, spp.tree, inplace=True)
    assert np.allclose(st.q, 0.0)


def test_negative_arrival_rejected(spp_of):
    tree = spp_of("path4").tree
    with pytest.raises(NegativeArrival):
        fluid_step(FluidState.start(np.zeros(4)), np.array([0.1, -0.1, 0.0, 0.0]), tree)


def test_integer_arrivals_reproduce_ttp(spp_of):
    spp = spp_of("path6-fig5")
    arr = ArrivalStream(spp.net.lam, 1).draws(2_000)
    tr = run(MatchingSystem(spp), make_policy("ttp", spp), 2_000, arrivals=arr, record_queues=True)
    st = FluidState.start(np.zeros(6))
    inc = one_hot(arr, 6)
    for t in range(2_000):
        fluid_step(st, inc[t], spp.tree, inplace=True)
        assert np.array_equal(st.q, tr.queues[t + 1])


def test_drift_on_builtins(spp_of):
    for name in ("path4", "path6-fig5", "path5-fig10"):
        spp = spp_of(name)
        rng = np.random.default_rng(0)
        q0 = rng.exponential(1.0, (20, spp.net.n))
        q0[:, spp.tree.root] = 0
        res = fluid_drift_check(spp.net.lam_array, spp.tree, spp.epsilon, q0, 200)
        assert res.passed, res


def test_beta_below_gap_and_F_properties(spp_of):
    spp = spp_of("path6-fig5")
    tree, lam, eps = spp.tree, spp.net.lam_array, spp.epsilon
    rng = np.random.default_rng(1)
    q = rng.exponential(1.0, (500, 6))
    q[:, tree.root] = 0
    small = q * (rng.uniform(0, eps, 500) / q.sum(axis=1))[:, None]
    r = beta(small, lam, tree)
    assert np.allclose(r.F, 1 - lam[tree.root] + r.Phi, atol=1e-12)
    assert np.allclose(r.beta, beta_closed_form(small, np.array(spp.epsilon_i), tree), atol=1e-12)
    big = beta(q * 10, lam, tree)
    assert np.all(big.F >= 1 - lam[tree.root] + np.minimum(eps, big.Phi) - 1e-12)
    assert np.all(big.F + 1e-12 >= beta(q, lam, tree).F)
    assert np.allclose(phi(q, tree), q.sum(axis=1))


def test_reflection_and_R_identity(spp_of):
    spp = spp_of("path6-fig5")
    arr = np.stack([ArrivalStream(spp.net.lam, 2, r).draws(1_000) for r in range(8)])
    res = reflection_check(spp.tree, one_hot(arr, 6), np.zeros((8, 6)))
    assert res.passed and res.worst <= 1e-9


def test_lipschitz_against_fluid_path(spp_of):
    spp = spp_of("path4")
    T, P, n = 1_000, 5, 4
    arr = np.stack([ArrivalStream(spp.net.lam, 3, r).draws(T) for r in range(P)])
    A = np.concatenate([np.zeros((1, P, n)), np.cumsum(one_hot(arr, n), axis=0)])
    Af = np.arange(T + 1)[:, None, None] * spp.net.lam_array * np.ones((1, P, 1))
    res = lipschitz_check(spp.tree, A, Af, np.zeros((P, n)))
    assert res.passed and 0 < res.worst <= 1


def test_random_planted_trees_satisfy_drift():
    rng = np.random.default_rng(5)
    for _ in range(5):
        net, root = planted_tree_network(rng, int(rng.integers(3, 9)))
        spp = solve_spp(net)
        assert spp.under_demanded == (root,)
        q0 = rng.exponential(1.0, (10, net.n))
        q0[:, root] = 0
        assert fluid_drift_check(net.lam_array, spp.tree, spp.epsilon, q0, int(2 * q0.sum(1).max() / spp.epsilon) + 5).passed
