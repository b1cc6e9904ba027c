"""Grid geometry, discrete sets, scalar fields and their distance operations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import DegenerateSetError, GeometryMismatchError

__all__ = [
    "GridGeometry",
    "DiscreteSet",
    "ScalarField",
    "BoxClipWarning",
    "signed_distance",
    "dilate",
    "dilation_escapes",
    "boundary_cells",
    "boundary_mask",
    "set_distance",
]


class BoxClipWarning(UserWarning):
    """A dilation reached past the box and was clipped."""


def _rim(shape: tuple[int, ...]) -> np.ndarray:
    rim = np.zeros(shape, dtype=bool)
    for ax in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[ax] = 0
        rim[tuple(idx)] = True
        idx[ax] = -1
        rim[tuple(idx)] = True
    return rim


@dataclass(frozen=True, eq=False)
class GridGeometry:
    """A box of ``shape`` cells of side ``spacing``.

    ``origin`` is the centre of cell ``(0, ..., 0)``; by default the box is
    centred on the coordinate origin.  ``flexible`` marks the cells whose
    membership may change (the region Omega); by default every cell but the
    outer rim.  Cells outside the box are always exterior.
    """

    shape: tuple[int, ...]
    spacing: float = 1.0
    origin: tuple[float, ...] | None = None
    flexible: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {len(shape)}")
        if min(shape) < 4:
            raise ValueError(f"every axis needs at least 4 cells, got {shape}")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "shape", shape)
        if self.origin is None:
            origin = tuple(-0.5 * (s - 1) * self.spacing for s in shape)
        else:
            origin = tuple(float(o) for o in self.origin)
            if len(origin) != len(shape):
                raise ValueError("origin has the wrong dimension")
        object.__setattr__(self, "origin", origin)
        if self.flexible is None:
            flex = ~_rim(shape)
        else:
            flex = np.array(self.flexible, dtype=bool)
            if flex.shape != shape:
                raise ValueError("flexible mask shape does not match the box")
            if np.any(flex & _rim(shape)):
                raise ValueError("flexible region must keep one cell of clearance to the box rim")
        flex.setflags(write=False)
        object.__setattr__(self, "flexible", flex)

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.n

    @cached_property
    def rim(self) -> np.ndarray:
        r = _rim(self.shape)
        r.setflags(write=False)
        return r

    @cached_property
    def diameter(self) -> float:
        return float(np.sqrt(sum((s * self.spacing) ** 2 for s in self.shape)))

    def coords(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinates, one array per axis (``indexing='ij'``)."""
        axes = [o + self.spacing * np.arange(s) for o, s in zip(self.origin, self.shape)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def centre_of(self, cell) -> np.ndarray:
        return np.asarray(self.origin) + self.spacing * np.asarray(cell, dtype=float)

    def with_flexible(self, mask: np.ndarray) -> "GridGeometry":
        return GridGeometry(self.shape, self.spacing, self.origin, mask)

    def compatible(self, other: "GridGeometry") -> bool:
        return (
            self is other
            or (
                self.shape == other.shape
                and self.spacing == other.spacing
                and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12 * self.spacing)
            )
        )

    def check(self, other: "GridGeometry") -> None:
        if not self.compatible(other):
            raise GeometryMismatchError(
                f"grid {self.shape}@{self.spacing} does not match {other.shape}@{other.spacing}"
            )

    def empty(self) -> "DiscreteSet":
        return DiscreteSet(self, np.zeros(self.shape, dtype=bool))

    def full(self) -> "DiscreteSet":
        return DiscreteSet(self, np.ones(self.shape, dtype=bool))


class DiscreteSet:
    """A set of grid cells; immutable, with set algebra inside the box."""

    __slots__ = ("geometry", "mask")

    def __init__(self, geometry: GridGeometry, mask):
        mask = np.array(mask, dtype=bool)
        if mask.shape != geometry.shape:
            raise GeometryMismatchError(f"mask shape {mask.shape} does not match box {geometry.shape}")
        mask.setflags(write=False)
        self.geometry = geometry
        self.mask = mask

    def _other(self, other: "DiscreteSet") -> np.ndarray:
        self.geometry.check(other.geometry)
        return other.mask

    def __and__(self, other):
        return DiscreteSet(self.geometry, self.mask & self._other(other))

    def __or__(self, other):
        return DiscreteSet(self.geometry, self.mask | self._other(other))

    def __sub__(self, other):
        return DiscreteSet(self.geometry, self.mask & ~self._other(other))

    def __xor__(self, other):
        return DiscreteSet(self.geometry, self.mask ^ self._other(other))

    def __invert__(self):
        return DiscreteSet(self.geometry, ~self.mask)

    def __eq__(self, other):
        if not isinstance(other, DiscreteSet):
            return NotImplemented
        return self.geometry.compatible(other.geometry) and np.array_equal(self.mask, other.mask)

    def __le__(self, other):
        return not np.any(self.mask & ~self._other(other))

    def __ge__(self, other):
        return other <= self

    __hash__ = None

    def __len__(self) -> int:
        return self.count

    def __repr__(self) -> str:
        return f"DiscreteSet(shape={self.geometry.shape}, count={self.count})"

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def measure(self) -> float:
        return self.count * self.geometry.cell_volume

    @property
    def is_empty(self) -> bool:
        return not self.mask.any()

    @property
    def is_full(self) -> bool:
        return bool(self.mask.all())

    def touches_rim(self) -> bool:
        return bool(np.any(self.mask & self.geometry.rim))

    def contains_rim(self) -> bool:
        return bool(np.all(self.mask[self.geometry.rim]))

    def cells(self) -> np.ndarray:
        return np.argwhere(self.mask)

    def translate(self, shift) -> "DiscreteSet":
        """Shift by a lattice vector; cells leaving the box are dropped."""
        shift = [int(s) for s in shift]
        out = np.zeros_like(self.mask)
        src, dst = [], []
        for s, n in zip(shift, self.geometry.shape):
            if abs(s) >= n:
                return DiscreteSet(self.geometry, out)
            src.append(slice(max(0, -s), n - max(0, s)))
            dst.append(slice(max(0, s), n - max(0, -s)))
        out[tuple(dst)] = self.mask[tuple(src)]
        return DiscreteSet(self.geometry, out)

    def indicator(self) -> "ScalarField":
        return ScalarField(self.geometry, self.mask.astype(float))


class ScalarField:
    """One finite real per cell."""

    __slots__ = ("geometry", "values", "info")

    def __init__(self, geometry: GridGeometry, values, info: dict | None = None):
        values = np.array(values, dtype=float)
        if values.shape != geometry.shape:
            raise GeometryMismatchError(f"field shape {values.shape} does not match box {geometry.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("scalar field must be finite everywhere")
        values.setflags(write=False)
        self.geometry = geometry
        self.values = values
        self.info = dict(info or {})

    def __repr__(self) -> str:
        return f"ScalarField(shape={self.geometry.shape}, range=[{self.values.min():g}, {self.values.max():g}])"

    def superlevel(self, level: float, strict: bool = True) -> DiscreteSet:
        m = self.values > level if strict else self.values >= level
        return DiscreteSet(self.geometry, m)

    def levels(self) -> np.ndarray:
        return np.unique(self.values)


def _edt(mask: np.ndarray, spacing: float) -> np.ndarray:
    return ndimage.distance_transform_edt(mask, sampling=spacing)


def signed_distance(s: DiscreteSet) -> ScalarField:
    """Signed distance with the zero level half-way between cells.

    Inside cells get ``+(distance to the nearest outside centre) - a/2``,
    outside cells ``-(distance to the nearest inside centre) + a/2``.
    Distances are measured between cell centres of the box.  The empty
    set maps to the constant ``-D`` and the full box to ``+D``, where ``D``
    is the box diameter.
    """
    g = s.geometry
    a = g.spacing
    if s.is_empty:
        return ScalarField(g, np.full(g.shape, -g.diameter))
    if s.is_full:
        return ScalarField(g, np.full(g.shape, g.diameter))
    inside = _edt(s.mask, a)
    outside = _edt(~s.mask, a)
    return ScalarField(g, np.where(s.mask, inside - 0.5 * a, 0.5 * a - outside))


def _distance_to_outside(g: GridGeometry) -> np.ndarray:
    idx = np.indices(g.shape)
    near = [np.minimum(idx[i] + 1, g.shape[i] - idx[i]) for i in range(g.n)]
    return g.spacing * np.min(np.stack(near), axis=0)


def dilation_escapes(s: DiscreteSet, lam: float) -> bool:
    """Whether ``{d_E >= -lam}`` reaches cells outside the box."""
    if s.is_empty:
        return False
    reach = _distance_to_outside(s.geometry)[s.mask].min()
    return bool(reach - 0.5 * s.geometry.spacing <= lam)


def dilate(s: DiscreteSet, lam: float) -> DiscreteSet:
    """``E^lam = {p : d_E(p) >= -lam}``, clipped to the box."""
    if lam < 0:
        raise ValueError("dilation radius must be nonnegative")
    if s.is_empty or s.is_full:
        return s
    if dilation_escapes(s, lam):
        warnings.warn(f"dilation by {lam} reaches past the box and was clipped", BoxClipWarning, stacklevel=2)
    outside = _edt(~s.mask, s.geometry.spacing)
    return DiscreteSet(s.geometry, s.mask | (outside - 0.5 * s.geometry.spacing <= lam))


def boundary_mask(s: DiscreteSet) -> np.ndarray:
    """Cells of the set with a face neighbour outside it (outside the box counts)."""
    m = s.mask
    padded = np.pad(m, 1, constant_values=False)
    interior = np.ones_like(m)
    core = tuple(slice(1, -1) for _ in range(m.ndim))
    for ax in range(m.ndim):
        for step in (-1, 1):
            interior &= np.roll(padded, step, axis=ax)[core]
    return m & ~interior


def boundary_cells(s: DiscreteSet) -> np.ndarray:
    """Boundary cells as an ``(k, n)`` index array in C order."""
    return np.argwhere(boundary_mask(s))


def set_distance(a: DiscreteSet, b: DiscreteSet) -> float:
    """Smallest centre distance between the boundary cells of ``a`` and ``b``."""
    a.geometry.check(b.geometry)
    ba, bb = boundary_mask(a), boundary_mask(b)
    if not ba.any() or not bb.any():
        raise DegenerateSetError("set distance needs two sets with nonempty boundary")
    return float(_edt(~bb, a.geometry.spacing)[ba].min())
