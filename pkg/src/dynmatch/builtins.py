"""Benchmark instances used throughout the experiments."""

from __future__ import annotations

from typing import Sequence

from .network import MatchingNetwork, validate


class UnknownBuiltin(KeyError):
    pass


def _path(weights: Sequence[float], rewards: Sequence[float]) -> MatchingNetwork:
    total = float(sum(weights))
    n = len(weights)
    return validate(
        {
            "n": n,
            "matches": [[i, i + 1] for i in range(n - 1)],
            "lambda": [w / total for w in weights],
            "rewards": list(rewards),
        }
    )


def path6_fig5() -> MatchingNetwork:
    """Path of six types, lambda = (1,2,4,6,8,7)/28, rewards (10,5,3,2,1)."""
    return _path([1, 2, 4, 6, 8, 7], [10, 5, 3, 2, 1])


def path5_fig10() -> MatchingNetwork:
    """Path of five types, lambda = (1,2,3,4,2.1)/12.1, rewards (1,2,3,2)."""
    return _path([1, 2, 3, 4, 2.1], [1, 2, 3, 2])


def path4(
    weights: Sequence[float] = (1, 2, 3, 4), rewards: Sequence[float] = (1, 1, 1)
) -> MatchingNetwork:
    """Path 0-1-2-3. The default parameters are not taken from any figure."""
    return _path(weights, rewards)


def cycle5() -> MatchingNetwork:
    lam = [0.165, 0.09, 0.325, 0.33, 0.09]
    return validate(
        {
            "n": 5,
            "matches": [[0, 1], [1, 2], [2, 3], [3, 4], [4, 0]],
            "lambda": lam,
            "rewards": [1.75, 2.0, 1.3, 1.4, 0.85],
        }
    )


def path_adversarial(n: int = 8) -> MatchingNetwork:
    """Path with increasing arrival weights; only the last type is under-demanded."""
    if n < 7:
        raise ValueError("the non-consistency fixture needs at least 7 types")
    return _path([float(i + 1) for i in range(n)], [1.0] * (n - 1))


BUILTINS = {
    "path6-fig5": path6_fig5,
    "path5-fig10": path5_fig10,
    "path4": path4,
    "cycle5": cycle5,
}


def builtin_instance(name: str, weights: Sequence[float] | None = None) -> MatchingNetwork:
    if name.startswith("builtin:"):
        name = name[len("builtin:"):]
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise UnknownBuiltin(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}") from None
    net = factory()
    if weights is not None:
        total = float(sum(weights))
        net = validate({**net.to_dict(), "lambda": [w / total for w in weights]})
    return net
