"""Centre-rule rasterization of the standard test shapes.

A cell belongs to the shape iff its centre does.  All shapes here are
two-dimensional except :func:`ball`, which works in any dimension.
"""

from __future__ import annotations

import numpy as np

from .grid import DiscreteSet, GridGeometry

__all__ = [
    "ball",
    "disk",
    "convex_polygon",
    "half_plane",
    "segment",
    "tangent_disks_cross",
    "wedge",
    "cross_geometry",
]


def _need_2d(g: GridGeometry) -> None:
    if g.n != 2:
        raise ValueError("this shape is two-dimensional")


def ball(g: GridGeometry, center, radius: float) -> DiscreteSet:
    x = g.coords()
    c = np.broadcast_to(np.asarray(center, dtype=float), (g.n,))
    r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, c))
    return DiscreteSet(g, r2 <= radius * radius)


def disk(g: GridGeometry, center, radius: float) -> DiscreteSet:
    _need_2d(g)
    return ball(g, center, radius)


def convex_polygon(g: GridGeometry, vertices) -> DiscreteSet:
    """Closed convex polygon; vertices in either orientation."""
    _need_2d(g)
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise ValueError("need at least three 2D vertices")
    area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    if area2 == 0:
        raise ValueError("degenerate polygon")
    if area2 < 0:
        v = v[::-1]
    x, y = g.coords()
    inside = np.ones(g.shape, dtype=bool)
    eps = 1e-12 * g.spacing
    for p, q in zip(v, np.roll(v, -1, axis=0)):
        cross = (q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0])
        inside &= cross >= -eps * np.hypot(*(q - p))
    return DiscreteSet(g, inside)


def half_plane(g: GridGeometry, normal, offset: float = 0.0) -> DiscreteSet:
    """``{x : x . normal <= offset}``, so ``normal`` is the outer normal."""
    _need_2d(g)
    nu = np.asarray(normal, dtype=float)
    nu = nu / np.linalg.norm(nu)
    x, y = g.coords()
    return DiscreteSet(g, x * nu[0] + y * nu[1] <= offset)


def segment(g: GridGeometry, start, stop) -> DiscreteSet:
    """One-cell-thin axis-aligned segment between two cell indices (inclusive)."""
    start, stop = np.asarray(start, dtype=int), np.asarray(stop, dtype=int)
    diff = stop - start
    if np.count_nonzero(diff) > 1:
        raise ValueError("segment must be axis aligned")
    m = np.zeros(g.shape, dtype=bool)
    steps = int(np.abs(diff).max()) if diff.any() else 0
    direction = np.sign(diff)
    for k in range(steps + 1):
        m[tuple(start + k * direction)] = True
    return DiscreteSet(g, m)


def _hull_with_point(x, y, c, rho: float, p) -> np.ndarray:
    # x lies in hull(B(c, rho) u {p}) iff the ray from p through x meets the
    # disk at a far distance >= |x - p|
    dx, dy = x - p[0], y - p[1]
    dist = np.hypot(dx, dy)
    safe = np.where(dist > 0, dist, 1.0)
    ux, uy = dx / safe, dy / safe
    pcx, pcy = p[0] - c[0], p[1] - c[1]
    b = ux * pcx + uy * pcy
    disc = b * b - (pcx * pcx + pcy * pcy - rho * rho)
    far = -b + np.sqrt(np.maximum(disc, 0.0))
    in_disk = (x - c[0]) ** 2 + (y - c[1]) ** 2 <= rho * rho
    return in_disk | (dist == 0) | ((disc >= 0) & (far >= dist - 1e-12))


def cross_geometry(scale: int, margin: float = 0.75) -> GridGeometry:
    """Grid for the tangent-disks cross with ``scale`` cells per unit.

    The box covers ``[-2 - margin, 2 + margin]^2`` with a cell centred on the
    origin (odd cell count per axis).
    """
    if scale < 1:
        raise ValueError("scale must be a positive integer")
    half = int(np.ceil((2.0 + margin) * scale))
    return GridGeometry((2 * half + 1, 2 * half + 1), 1.0 / scale)


def tangent_disks_cross(g: GridGeometry) -> DiscreteSet:
    """Union of the hulls of ``B((-1,1),1)`` and ``B((1,-1),1)`` with the origin."""
    _need_2d(g)
    x, y = g.coords()
    origin = (0.0, 0.0)
    m = _hull_with_point(x, y, (-1.0, 1.0), 1.0, origin) | _hull_with_point(x, y, (1.0, -1.0), 1.0, origin)
    return DiscreteSet(g, m)


def wedge(g: GridGeometry, r: float) -> DiscreteSet:
    """``Q_r = {|x_2| <= r, |x_1| <= |x_2|}``."""
    _need_2d(g)
    x, y = g.coords()
    return DiscreteSet(g, (np.abs(y) <= r) & (np.abs(x) <= np.abs(y)))
