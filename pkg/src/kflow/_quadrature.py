"""Cell-pair integrals of radial kernels.

The weight between the unit cells ``C_0`` and ``C_v`` is

    w(v) = int_{C_0} int_{C_v} K(|x - y|) dx dy = int K(|z|) L(z - v a) dz

where ``L(z) = prod_i (a - |z_i|)_+`` is the autocorrelation of one cell.
For n <= 2 the integral is taken in polar form: an outer tanh-sinh rule in
the radius (robust to the r^-s endpoint behaviour of the fractional kernel
and to the square-root kinks where the circle becomes tangent to a cell
face) and an inner composite Gauss-Legendre rule in the angle, split at the
exact angles where the circle crosses a kink line of ``L``.  For n = 3 an
adaptive tensor Gauss-Legendre cubature over boxes is used instead.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np

_GL_ORDER = 16
_TS_TMAX = 4.0


class QuadratureError(RuntimeError):
    """Raised when a cell-pair integral misses its tolerance."""


@lru_cache(maxsize=None)
def _gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


@lru_cache(maxsize=None)
def _tanh_sinh(level: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes on (-1, 1) as (distance to -1, distance to +1, weight)."""
    step = 2.0 ** (-level)
    t = np.arange(-_TS_TMAX, _TS_TMAX + 0.5 * step, step)
    u = 0.5 * np.pi * np.sinh(t)
    from_lo = 2.0 / (1.0 + np.exp(-2.0 * u))
    from_hi = 2.0 / (1.0 + np.exp(2.0 * u))
    weight = step * 0.5 * np.pi * np.cosh(t) / np.cosh(u) ** 2
    return from_lo, from_hi, weight


def _hat(z: np.ndarray, lo: float, hi: float) -> np.ndarray:
    # (a - |z - c|)_+ written as min(z - lo, hi - z) so values near an
    # endpoint keep full relative precision.
    return np.maximum(0.0, np.minimum(z - lo, hi - z))


def _angular_mass_2d(r: np.ndarray, lo: np.ndarray, mid: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """int_0^{2pi} L(r cos t, r sin t) dt for every radius in ``r``."""
    r = r[:, None]
    cuts = [np.zeros_like(r), np.full_like(r, 2.0 * np.pi)]
    for c in (lo[0], mid[0], hi[0]):
        ratio = np.clip(c / r, -1.0, 1.0)
        ang = np.arccos(ratio)
        cuts += [ang, 2.0 * np.pi - ang]
    for c in (lo[1], mid[1], hi[1]):
        ratio = np.clip(c / r, -1.0, 1.0)
        ang = np.mod(np.arcsin(ratio), 2.0 * np.pi)
        cuts += [ang, np.mod(np.pi - np.arcsin(ratio), 2.0 * np.pi)]
    edges = np.sort(np.concatenate(cuts, axis=1), axis=1)
    left, right = edges[:, :-1], edges[:, 1:]
    x, w = _gauss_legendre(_GL_ORDER)
    half = 0.5 * (right - left)
    theta = (0.5 * (right + left))[..., None] + half[..., None] * x
    vals = _hat(r[..., None] * np.cos(theta), lo[0], hi[0]) * _hat(
        r[..., None] * np.sin(theta), lo[1], hi[1]
    )
    return np.einsum("rik,k,ri->r", vals, w, half)


def _angular_mass_1d(r: np.ndarray, lo: np.ndarray, mid: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return _hat(r, lo[0], hi[0]) + _hat(-r, lo[0], hi[0])


def _radial_breaks(lo: np.ndarray, mid: np.ndarray, hi: np.ndarray, rmax: float, extra) -> np.ndarray:
    n = lo.size
    levels = [np.array([lo[i], mid[i], hi[i]]) for i in range(n)]
    pts = {0.0, rmax}
    for i in range(n):
        pts.update(np.abs(levels[i]).tolist())
    if n == 2:
        for c0 in levels[0]:
            for c1 in levels[1]:
                pts.add(float(np.hypot(c0, c1)))
    pts.update(float(e) for e in extra)
    arr = np.array(sorted(p for p in pts if 0.0 <= p <= rmax))
    keep = np.concatenate([[True], np.diff(arr) > 1e-14 * max(rmax, 1.0)])
    return arr[keep]


def cell_pair_radial(
    radial: Callable[[np.ndarray], np.ndarray],
    offset: np.ndarray,
    spacing: float,
    rtol: float,
    support: float = np.inf,
    knots=(),
    max_level: int = 9,
) -> float:
    """Cell-pair weight for n in {1, 2}.

    ``radial(r)`` must return ``r**(n-1) * K(r)`` (the radial density
    without the angular factor), so that singular kernels can be written
    in a cancellation-free form.
    """
    offset = np.asarray(offset, dtype=float)
    n = offset.size
    if n not in (1, 2):
        raise ValueError("polar cell-pair quadrature supports n = 1, 2")
    mid = offset * spacing
    lo, hi = mid - spacing, mid + spacing
    corner = float(np.sqrt(np.sum(np.maximum(np.abs(lo), np.abs(hi)) ** 2)))
    rmax = min(corner, support)
    if rmax <= 0.0:
        return 0.0
    breaks = _radial_breaks(lo, mid, hi, rmax, [k for k in knots if k < rmax])
    angular = _angular_mass_2d if n == 2 else _angular_mass_1d

    def integrate(level: int) -> float:
        from_lo, from_hi, weight = _tanh_sinh(level)
        total = 0.0
        for a, b in zip(breaks[:-1], breaks[1:]):
            half = 0.5 * (b - a)
            r = np.where(from_lo < from_hi, a + half * from_lo, b - half * from_hi)
            ok = (r > a) & (r < b)
            r = r[ok]
            total += half * float(np.sum(weight[ok] * radial(r) * angular(r, lo, mid, hi)))
        return total

    prev = integrate(3)
    for level in range(4, max_level + 1):
        cur = integrate(level)
        if abs(cur - prev) <= rtol * abs(cur) or cur == prev:
            return cur
        prev = cur
    raise QuadratureError(
        f"cell-pair quadrature for offset {tuple(offset.astype(int))} did not reach rtol={rtol}"
    )


def cell_pair_cubature(
    kernel: Callable[[np.ndarray], np.ndarray],
    offset: np.ndarray,
    spacing: float,
    rtol: float,
    max_boxes: int = 200_000,
) -> float:
    """Adaptive box cubature of ``int K(|z|) L(z - v a) dz`` in any dimension."""
    offset = np.asarray(offset, dtype=float)
    n = offset.size
    mid = offset * spacing
    lo, hi = mid - spacing, mid + spacing
    # split at the kink of L so every box sees a polynomial weight and the
    # kernel singularity (z = 0) only ever sits on a box boundary
    grids = [np.array([lo[i], mid[i], hi[i]]) for i in range(n)]
    mesh = np.stack(np.meshgrid(*[np.arange(2)] * n, indexing="ij"), axis=-1).reshape(-1, n)
    box_lo = np.array([[grids[i][m[i]] for i in range(n)] for m in mesh])
    box_hi = np.array([[grids[i][m[i] + 1] for i in range(n)] for m in mesh])

    def rule(order: int):
        x, w = _gauss_legendre(order)
        pts = np.stack(np.meshgrid(*[x] * n, indexing="ij"), axis=-1).reshape(-1, n)
        wts = np.prod(np.stack(np.meshgrid(*[w] * n, indexing="ij"), axis=-1).reshape(-1, n), axis=1)
        return pts, wts

    coarse, fine = rule(5), rule(8)

    def apply(pts_w, blo, bhi):
        pts, wts = pts_w
        half = 0.5 * (bhi - blo)
        centre = 0.5 * (bhi + blo)
        z = centre[:, None, :] + half[:, None, :] * pts[None]
        f = kernel(np.sqrt(np.sum(z * z, axis=-1)))
        for i in range(n):
            f = f * _hat(z[..., i], lo[i], hi[i])
        return np.prod(half, axis=1) * (f @ wts)

    pool_lo, pool_hi = box_lo, box_hi
    pool_q = apply(fine, pool_lo, pool_hi)
    pool_err = np.abs(pool_q - apply(coarse, pool_lo, pool_hi))
    while True:
        estimate = pool_q.sum()
        total_err = pool_err.sum()
        if total_err <= rtol * abs(estimate):
            return float(estimate)
        order = np.argsort(pool_err)[::-1]
        cum = np.cumsum(pool_err[order])
        cut = int(np.searchsorted(cum, 0.5 * total_err)) + 1
        split = np.zeros(len(pool_err), dtype=bool)
        split[order[:cut]] = True
        slo, shi = pool_lo[split], pool_hi[split]
        centre = 0.5 * (slo + shi)
        kids_lo = np.concatenate([np.where(m == 0, slo, centre) for m in mesh])
        kids_hi = np.concatenate([np.where(m == 0, centre, shi) for m in mesh])
        kids_q = apply(fine, kids_lo, kids_hi)
        kids_err = np.abs(kids_q - apply(coarse, kids_lo, kids_hi))
        pool_lo = np.concatenate([pool_lo[~split], kids_lo])
        pool_hi = np.concatenate([pool_hi[~split], kids_hi])
        pool_q = np.concatenate([pool_q[~split], kids_q])
        pool_err = np.concatenate([pool_err[~split], kids_err])
        if len(pool_q) > max_boxes:
            raise QuadratureError(
                f"cell-pair cubature for offset {tuple(offset.astype(int))} exceeded {max_boxes} boxes"
            )
