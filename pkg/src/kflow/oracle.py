"""Brute-force references.

These share only the interaction table with the main code path: pair
weights are looked up offset by offset and summed explicitly, without the
shifted-slab or convolution machinery of :mod:`kflow.energy`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DiscreteSet
from .kernel import InteractionTable
from .mincut import CutProblem

__all__ = ["BruteForceResult", "brute_force_minimizer", "brute_force_perimeter", "MAX_FREE_CELLS"]

MAX_FREE_CELLS = 18
MAX_PERIMETER_CELLS = 64 * 64


def _lookup(table: InteractionTable):
    return {tuple(int(x) for x in v): float(w) for v, w in zip(table.offsets, table.weights)}


def brute_force_perimeter(s: DiscreteSet, table: InteractionTable) -> float:
    """Double sum over every (inside, outside) cell pair, outside-box cells included."""
    g = s.geometry
    if g.size > MAX_PERIMETER_CELLS:
        raise ValueError(f"grid of {g.size} cells is too large for the brute-force perimeter")
    weights = _lookup(table)
    shape = np.array(g.shape)
    inside = [tuple(int(x) for x in c) for c in np.argwhere(s.mask)]
    total = 0.0
    for p in inside:
        pv = np.array(p)
        for v, w in weights.items():
            q = pv + np.array(v)
            if np.any(q < 0) or np.any(q >= shape) or not s.mask[tuple(q)]:
                total += w
    return total + table.tail * table.cell_volume * len(inside)


@dataclass
class BruteForceResult:
    optima: list[DiscreteSet]
    energy: float
    energies: np.ndarray
    order: str

    @property
    def intersection(self) -> DiscreteSet:
        out = self.optima[0]
        for o in self.optima[1:]:
            out = out & o
        return out

    @property
    def union(self) -> DiscreteSet:
        out = self.optima[0]
        for o in self.optima[1:]:
            out = out | o
        return out


def _subset_bits(k: int, order: str) -> np.ndarray:
    codes = np.arange(2**k, dtype=np.int64)
    if order == "gray":
        codes = codes ^ (codes >> 1)
    elif order != "binary":
        raise ValueError(f"unknown enumeration order {order!r}")
    return ((codes[:, None] >> np.arange(k)) & 1).astype(bool)


def brute_force_minimizer(problem: CutProblem, order: str = "binary", rtol: float = 1e-9) -> BruteForceResult:
    """Enumerate every subset of the free cells.

    Energies are ``Per(G u X) + sum_{G u X} g`` written as
    ``Per(G) + sum_G g + sum_{i in X} (W + tau a^n + g_i - 2 w(i, G)) - 2 sum_{i<j in X} w(i, j)``
    and accumulated term by term in a fixed order, so any enumeration order
    produces bit-identical energies per subset.
    """
    g = problem.geometry
    free = [tuple(int(x) for x in c) for c in np.argwhere(problem.free)]
    k = len(free)
    if k > MAX_FREE_CELLS:
        raise ValueError(f"{k} free cells exceed the enumeration limit of {MAX_FREE_CELLS}")
    table = problem.table
    weights = _lookup(table)
    W = float(sum(weights.values()))
    own = table.tail * table.cell_volume
    fg = [tuple(int(x) for x in c) for c in np.argwhere(problem.pin_fg)]

    def w(p, q):
        return weights.get(tuple(a - b for a, b in zip(p, q)), 0.0)

    # Per(G) from the same pair decomposition
    base = 0.0
    for p in fg:
        base += W + own + float(problem.unary[p])
    for i, p in enumerate(fg):
        for q in fg[i + 1 :]:
            base -= 2.0 * w(p, q)

    lin = np.empty(k)
    for i, p in enumerate(free):
        lin[i] = W + own + float(problem.unary[p]) - 2.0 * sum(w(p, q) for q in fg)

    bits = _subset_bits(k, order)
    energy = np.full(len(bits), base)
    for i in range(k):
        energy = energy + np.where(bits[:, i], lin[i], 0.0)
    for i in range(k):
        for j in range(i + 1, k):
            wij = w(free[i], free[j])
            if wij:
                energy = energy - np.where(bits[:, i] & bits[:, j], 2.0 * wij, 0.0)

    best = float(energy.min())
    tol = rtol * max(1.0, abs(best))
    optima = []
    for row in np.flatnonzero(energy <= best + tol):
        m = problem.pin_fg.copy()
        for i in np.flatnonzero(bits[row]):
            m[free[i]] = True
        optima.append(DiscreteSet(g, m))
    return BruteForceResult(optima, best, energy, order)
