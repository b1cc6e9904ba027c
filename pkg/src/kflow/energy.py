"""Nonlocal perimeter, localized perimeter, K-curvature and the J_K functional.

Conventions shared by every evaluator here:

* pairs farther apart than the truncation radius interact only through the
  tail mass ``tau``, with everything beyond the radius counted as exterior;
* cells outside the box are exterior (value 0 for fields);
* weights are cell-pair masses, so a perimeter is a plain weighted count of
  crossing pairs and a curvature is that count divided by the cell volume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GeometryMismatchError
from .grid import DiscreteSet, GridGeometry, ScalarField, boundary_mask
from .kernel import InteractionTable

__all__ = [
    "CurvatureSample",
    "nonlocal_perimeter",
    "localized_perimeter",
    "k_curvature",
    "curvature_field",
    "min_boundary_curvature",
    "jk_functional",
    "coarea_decompose",
    "CoareaDecomposition",
]


@dataclass(frozen=True)
class CurvatureSample:
    cell: tuple[int, ...]
    value: float


def _check(geometry: GridGeometry, table: InteractionTable) -> None:
    if geometry.n != table.n:
        raise GeometryMismatchError(f"{geometry.n}D grid with a {table.n}D kernel")
    if not np.isclose(geometry.spacing, table.spacing, rtol=1e-12, atol=0):
        raise GeometryMismatchError(f"grid spacing {geometry.spacing} != kernel spacing {table.spacing}")


def _half_offsets(table: InteractionTable) -> tuple[np.ndarray, np.ndarray]:
    """One representative of each +-v pair (first nonzero coordinate positive)."""
    off = table.offsets
    first = np.array([row[np.flatnonzero(row)[0]] for row in off])
    keep = first > 0
    return off[keep], table.weights[keep]


def _slabs(shape, v):
    src, dst = [], []
    for s, n in zip(v, shape):
        src.append(slice(max(0, -s), n - max(0, s)))
        dst.append(slice(max(0, s), n - max(0, -s)))
    return tuple(src), tuple(dst)


def _offset_sums(u: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per half-offset v: sum over unordered pairs {p, p+v} of |u_p - u_q|.

    Pairs with one end outside the box use the exterior value 0.
    """
    absu = np.abs(u)
    total = absu.sum()
    out = np.empty(len(offsets))
    for k, v in enumerate(offsets):
        if np.any(np.abs(v) >= u.shape):
            out[k] = 2.0 * total
            continue
        src, dst = _slabs(u.shape, v)
        a, b = u[src], u[dst]
        out[k] = np.abs(a - b).sum() + (total - absu[src].sum()) + (total - absu[dst].sum())
    return out


def _pair_energy(u: np.ndarray, table: InteractionTable) -> float:
    offsets, weights = _half_offsets(table)
    sums = _offset_sums(u, offsets)
    return float(weights @ sums) + table.tail * table.cell_volume * float(np.abs(u).sum())


def nonlocal_perimeter(s: DiscreteSet, table: InteractionTable) -> float:
    """``Per_K(E)``: weight of all crossing pairs plus ``tau * a^n * |E|``."""
    _check(s.geometry, table)
    if s.is_empty:
        return 0.0
    return _pair_energy(s.mask.astype(float), table)


def localized_perimeter(s: DiscreteSet, omega, table: InteractionTable) -> float:
    """``Per_K(E, Omega)``: crossing pairs with at least one end in Omega.

    ``omega`` is a boolean mask or a :class:`DiscreteSet` on the same grid.
    """
    _check(s.geometry, table)
    om = omega.mask if isinstance(omega, DiscreteSet) else np.asarray(omega, dtype=bool)
    if om.shape != s.geometry.shape:
        raise GeometryMismatchError("omega mask does not match the grid")
    e = s.mask
    offsets, weights = _half_offsets(table)
    counts = np.empty(len(offsets))
    eo = e & om
    n_eo = int(eo.sum())
    for k, v in enumerate(offsets):
        if np.any(np.abs(v) >= e.shape):
            counts[k] = 2 * n_eo
            continue
        src, dst = _slabs(e.shape, v)
        ea, eb, oa, ob = e[src], e[dst], om[src], om[dst]
        cross = (ea != eb) & (oa | ob)
        # pairs leaving the box: the outside end is exterior and not in Omega
        counts[k] = int(cross.sum()) + (n_eo - int(eo[src].sum())) + (n_eo - int(eo[dst].sum()))
    return float(weights @ counts) + table.tail * table.cell_volume * n_eo


def _signed_mass(s: DiscreteSet, table: InteractionTable) -> np.ndarray:
    """``S(x) = sum_v (chi_ext - chi_E)(x+v) w(v) / a^n`` on the box padded by one cell."""
    m = np.pad(s.mask.astype(float), 1, constant_values=0.0)
    conv = ndimage.correlate(m, table.stencil, mode="constant", cval=0.0)
    return (table.total_weight - 2.0 * conv) / table.cell_volume


def curvature_field(s: DiscreteSet, table: InteractionTable) -> np.ndarray:
    """Curvature at every boundary cell, NaN elsewhere.

    A boundary cell ``p`` is paired with its exterior face neighbours ``q``;
    the sample is the mean of ``S(p)`` and the largest ``S(q)``, which puts
    the evaluation point on the cell face and makes flat faces exactly zero.
    """
    _check(s.geometry, table)
    S = _signed_mass(s, table)
    n = s.geometry.n
    padded = np.pad(s.mask, 1, constant_values=False)
    core = tuple(slice(1, -1) for _ in range(n))
    best = np.full(s.geometry.shape, -np.inf)
    for ax in range(n):
        for step in (-1, 1):
            nb_in = np.roll(padded, -step, axis=ax)[core]
            nb_S = np.roll(S, -step, axis=ax)[core]
            best = np.where(~nb_in, np.maximum(best, nb_S), best)
    bd = boundary_mask(s)
    out = np.full(s.geometry.shape, np.nan)
    out[bd] = 0.5 * (S[core][bd] + best[bd]) + table.tail
    return out


def k_curvature(s: DiscreteSet, table: InteractionTable, cells=None) -> list[CurvatureSample]:
    field = curvature_field(s, table)
    if cells is None:
        cells = np.argwhere(~np.isnan(field))
    samples = []
    for c in cells:
        c = tuple(int(i) for i in c)
        val = field[c]
        if np.isnan(val):
            raise ValueError(f"cell {c} is not a boundary cell of the set")
        samples.append(CurvatureSample(c, float(val)))
    return samples


def min_boundary_curvature(s: DiscreteSet, table: InteractionTable, region=None) -> float:
    """Smallest boundary curvature, optionally restricted to a cell mask."""
    field = curvature_field(s, table)
    if region is not None:
        field = np.where(region, field, np.nan)
    if np.all(np.isnan(field)):
        return float("nan")
    return float(np.nanmin(field))


def jk_functional(u: ScalarField, table: InteractionTable) -> float:
    """``J_K(u)`` with exterior value 0 and the tail counted against 0."""
    _check(u.geometry, table)
    return _pair_energy(np.asarray(u.values, dtype=float), table)


@dataclass(frozen=True)
class CoareaDecomposition:
    levels: np.ndarray
    gaps: np.ndarray
    perimeters: np.ndarray
    total: float


def coarea_decompose(u: ScalarField, table: InteractionTable) -> CoareaDecomposition:
    """Layer-cake split of ``J_K(u)`` over the gaps between attained values.

    ``levels[i]`` is the lower end of the i-th gap.  For a nonnegative level
    the layer is ``{u > l}``; below zero the layer ``{u > l}`` contains the
    whole exterior, and its perimeter is that of the bounded ``{u <= l}``.
    """
    _check(u.geometry, table)
    vals = np.unique(np.concatenate([np.unique(u.values), [0.0]]))
    lo, hi = vals[:-1], vals[1:]
    per = np.empty(len(lo))
    for i, l in enumerate(lo):
        layer = u.values > l if l >= 0 else u.values <= l
        per[i] = nonlocal_perimeter(DiscreteSet(u.geometry, layer), table)
    gaps = hi - lo
    return CoareaDecomposition(lo, gaps, per, float(gaps @ per))
