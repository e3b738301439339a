"""Dense tableau simplex with Bland's rule.

Solves ``max c^T x  s.t.  A x <= b, x >= 0`` for ``b >= 0``, starting from
the all-slack basis, which is feasible for such problems. The instances in
this package are tiny, so there is no sparse or revised-simplex machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-12


class LPError(RuntimeError):
    pass


class Unbounded(LPError):
    pass


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray  # structural variables
    slack: np.ndarray  # one per constraint row
    basis: tuple[int, ...]  # column ids; >= n_struct means slack (id - n_struct)
    objective: float
    pivots: int


def simplex_max(c: np.ndarray, A: np.ndarray, b: np.ndarray, max_pivots: int = 10_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, nv = A.shape
    if np.any(b < -PIVOT_TOL):
        raise LPError("all-slack start requires b >= 0")
    ncol = nv + m
    T = np.zeros((m + 1, ncol + 1))
    T[:m, :nv] = A
    T[:m, nv:ncol] = np.eye(m)
    T[:m, -1] = np.maximum(b, 0.0)
    # objective row holds reduced costs c_j - c_B B^-1 A_j (positive => improving)
    T[m, :nv] = c
    basis = list(range(nv, ncol))

    pivots = 0
    while True:
        red = T[m, :ncol]
        improving = np.flatnonzero(red > 1e-11)
        if improving.size == 0:
            break
        col = int(improving[0])  # Bland: lowest-index entering column
        colv = T[:m, col]
        mask = colv > PIVOT_TOL
        if not mask.any():
            raise Unbounded(f"column {col} is unbounded")
        ratios = np.full(m, np.inf)
        ratios[mask] = T[:m, -1][mask] / colv[mask]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-14 * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: basis[r]))  # Bland: lowest-index leaving variable
        T[row] /= T[row, col]
        others = np.arange(m + 1) != row
        T[others] -= np.outer(T[others, col], T[row])
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise LPError("pivot limit exceeded")

    values = np.zeros(ncol)
    for r, j in enumerate(basis):
        values[j] = T[r, -1]
    x = values[:nv]
    return LPResult(
        x=x,
        slack=values[nv:],
        basis=tuple(basis),
        objective=float(c @ x),
        pivots=pivots,
    )
