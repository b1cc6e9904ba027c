"""Interaction tables for translation-invariant radial kernels on a grid."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._quadrature import QuadratureError, cell_pair_cubature, cell_pair_radial

__all__ = [
    "InteractionTable",
    "RadialProfile",
    "KernelCheck",
    "KernelReport",
    "QuadratureError",
    "build_fractional_kernel",
    "build_compact_kernel",
    "validate_kernel",
    "top_hat",
    "sphere_area",
    "save_table",
    "load_table",
]

NEAR_FIELD_CELLS = 3.0

_MAGIC = b"KFLT"
_VERSION = 1


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} (2, 2pi, 4pi for n = 1, 2, 3)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True)
class RadialProfile:
    """Nonnegative radial kernel profile ``K(r)`` vanishing for ``r > support``.

    ``knots`` lists radii where the profile may be non-smooth; they are
    used as breakpoints by the quadrature.
    """

    func: Callable[[np.ndarray], np.ndarray]
    support: float
    knots: tuple[float, ...] = ()
    name: str = "profile"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.support, self.func(r), 0.0)


def top_hat(radius: float, height: float = 1.0) -> RadialProfile:
    return RadialProfile(
        func=lambda r: np.full_like(np.asarray(r, dtype=float), height),
        support=float(radius),
        knots=(float(radius),),
        name=f"top_hat(r={radius:g},h={height:g})",
    )


@dataclass(frozen=True, eq=False)
class InteractionTable:
    """Kernel mass ``w(v)`` between the cell at the origin and the cell at offset ``v``.

    Only offsets with ``0 < |v| a <= radius`` are stored.  ``tail`` is the
    kernel mass beyond the truncation radius; evaluators treat that far
    region as exterior.
    """

    n: int
    spacing: float
    radius: float
    offsets: np.ndarray
    weights: np.ndarray
    tail: float = 0.0
    kind: str = "compact"
    exponent: float | None = None
    profile_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.offsets, dtype=np.int64).reshape(-1, self.n)
        weights = np.ascontiguousarray(self.weights, dtype=np.float64).reshape(-1)
        if len(offsets) != len(weights):
            raise ValueError("offsets and weights differ in length")
        offsets.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.n

    @cached_property
    def reach(self) -> int:
        """Largest offset component, in cells."""
        return int(np.abs(self.offsets).max()) if len(self.offsets) else 0

    @cached_property
    def stencil(self) -> np.ndarray:
        """Dense weight array of shape ``(2*reach+1,)*n`` centred on the origin."""
        r = self.reach
        out = np.zeros((2 * r + 1,) * self.n)
        if len(self.offsets):
            np.add.at(out, tuple((self.offsets + r).T), self.weights)
        out.setflags(write=False)
        return out

    @cached_property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @cached_property
    def max_weight(self) -> float:
        return float(self.weights.max()) if len(self.weights) else 0.0

    def weight(self, offset: Sequence[int]) -> float:
        v = np.asarray(offset, dtype=np.int64)
        r = self.reach
        if np.any(np.abs(v) > r):
            return 0.0
        return float(self.stencil[tuple(v + r)])

    def largest_weights(self, k: int) -> np.ndarray:
        return np.sort(self.weights)[::-1][:k]

    @property
    def label(self) -> str:
        if self.kind == "fractional":
            return f"fractional(s={self.exponent:g})"
        return self.profile_id or self.kind

    def summary_text(self) -> str:
        lines = [
            f"# kflow interaction table v{_VERSION}",
            f"# kind={self.label} n={self.n} a={self.spacing!r} R_K={self.radius!r}",
            f"# tail={self.tail!r} count={len(self)} (tail counted as exterior)",
            "# offset weight",
        ]
        order = np.lexsort(self.offsets.T[::-1])
        for i in order:
            off = " ".join(str(int(c)) for c in self.offsets[i])
            lines.append(f"{off} {self.weights[i]:.17g}")
        return "\n".join(lines) + "\n"


def _lattice_offsets(n: int, spacing: float, radius: float) -> np.ndarray:
    r = int(math.floor(radius / spacing + 1e-9))
    axes = [np.arange(-r, r + 1)] * n
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    norm = np.sqrt(np.sum(grid.astype(float) ** 2, axis=1)) * spacing
    keep = (norm > 0) & (norm <= radius * (1 + 1e-12))
    return grid[keep]


def _symmetric_fill(offsets: np.ndarray, compute: Callable[[np.ndarray], float]) -> np.ndarray:
    # Radial kernels: the weight depends only on the sorted absolute offset.
    cache: dict[tuple[int, ...], float] = {}
    out = np.empty(len(offsets))
    for i, v in enumerate(offsets):
        key = tuple(sorted(np.abs(v).tolist()))
        if key not in cache:
            cache[key] = compute(np.array(key))
        out[i] = cache[key]
    return out


def build_fractional_kernel(
    n: int, s: float, a: float, radius: float, q_tol: float = 1e-10
) -> InteractionTable:
    """Table for ``K(x) = |x|^{-(n+s)}`` truncated at ``radius``.

    Offsets within three cells use exact cell-pair quadrature; the rest
    use the midpoint value ``K(v a) a^{2n}``.
    """
    if n not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {n}")
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional exponent must lie in (0, 1), got {s}")
    if a <= 0:
        raise ValueError("spacing must be positive")
    if radius < 3.0 * a * (1 - 1e-12):
        raise ValueError(f"truncation radius {radius} is below 3 cells ({3 * a})")

    offsets = _lattice_offsets(n, a, radius)
    norms = np.sqrt(np.sum(offsets.astype(float) ** 2, axis=1))

    def exact(v: np.ndarray) -> float:
        if n <= 2:
            return cell_pair_radial(lambda r: r ** (-1.0 - s), v, a, q_tol)
        return cell_pair_cubature(lambda r: r ** (-n - s), v, a, q_tol)

    weights = (norms * a) ** (-n - s) * a ** (2 * n)
    near = norms <= NEAR_FIELD_CELLS + 1e-12
    weights[near] = _symmetric_fill(offsets[near], exact)
    tail = sphere_area(n) / (s * radius**s)
    return InteractionTable(
        n=n,
        spacing=float(a),
        radius=float(radius),
        offsets=offsets,
        weights=weights,
        tail=float(tail),
        kind="fractional",
        exponent=float(s),
        profile_id=f"fractional(s={s:g})",
        meta={"q_tol": q_tol, "near_field_cells": NEAR_FIELD_CELLS},
    )


def build_compact_kernel(
    n: int, profile: RadialProfile, a: float, q_tol: float = 1e-8
) -> InteractionTable:
    """Table for a compactly supported radial profile; every weight is integrated."""
    if n not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {n}")
    support = float(profile.support)
    if not np.isfinite(support) or support <= 0:
        raise ValueError("profile needs a finite positive support radius")
    samples = profile(np.linspace(0.0, support, 257))
    if np.any(samples < 0):
        raise ValueError("kernel profile has negative samples")
    if not np.any(samples > 0):
        raise ValueError("kernel profile vanishes identically (degenerate kernel)")
    offsets = _lattice_offsets(n, a, support)
    knots = tuple(profile.knots)

    def exact(v: np.ndarray) -> float:
        if n <= 2:
            return cell_pair_radial(
                lambda r: r ** (n - 1) * profile(r), v, a, q_tol, support=support, knots=knots
            )
        return cell_pair_cubature(lambda r: profile(r), v, a, q_tol)

    weights = _symmetric_fill(offsets, exact)
    keep = weights > 0
    return InteractionTable(
        n=n,
        spacing=float(a),
        radius=support,
        offsets=offsets[keep],
        weights=weights[keep],
        tail=0.0,
        kind="compact",
        exponent=None,
        profile_id=profile.name,
        meta={"q_tol": q_tol},
    )


@dataclass(frozen=True)
class KernelCheck:
    name: str
    passed: bool
    offset: tuple[int, ...] | None = None
    detail: str = ""


@dataclass(frozen=True)
class KernelReport:
    checks: tuple[KernelCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> KernelCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_kernel(table: InteractionTable) -> KernelReport:
    """Check symmetry, nonnegativity, integrability and the absent self-offset."""
    checks = []
    offs, w = table.offsets, table.weights
    lookup = {tuple(v): wi for v, wi in zip(offs.tolist(), w.tolist())}

    bad = None
    for v, wi in lookup.items():
        mirror = tuple(-c for c in v)
        if lookup.get(mirror) != wi:
            bad = v
            break
    checks.append(KernelCheck("symmetry", bad is None, bad, "" if bad is None else "w(v) != w(-v)"))

    neg = np.flatnonzero(w < 0)
    bad = tuple(offs[neg[0]].tolist()) if len(neg) else None
    tail_ok = table.tail >= 0
    checks.append(
        KernelCheck(
            "nonnegativity",
            bad is None and tail_ok,
            bad,
            "" if bad is None and tail_ok else ("negative tail" if bad is None else "negative weight"),
        )
    )

    dist = np.sqrt(np.sum(offs.astype(float) ** 2, axis=1)) * table.spacing
    moment = float(np.sum(np.minimum(1.0, dist) * w))
    finite = bool(np.isfinite(moment) and np.all(np.isfinite(w)) and np.isfinite(table.tail))
    checks.append(KernelCheck("integrability", finite, None, f"sum min(1,|v a|) w = {moment:.6g}"))

    zero = np.flatnonzero(np.all(offs == 0, axis=1))
    checks.append(
        KernelCheck("no_self_offset", len(zero) == 0, tuple(offs[zero[0]].tolist()) if len(zero) else None)
    )
    return KernelReport(tuple(checks))


def save_table(table: InteractionTable, path: str | Path) -> None:
    """Write the little-endian binary form plus a ``.txt`` summary next to it."""
    path = Path(path)
    ident = table.profile_id.encode("utf-8")
    header = struct.pack(
        "<4sIIBddddQH",
        _MAGIC,
        _VERSION,
        table.n,
        1 if table.kind == "fractional" else 0,
        table.exponent if table.exponent is not None else float("nan"),
        table.spacing,
        table.radius,
        table.tail,
        len(table),
        len(ident),
    )
    body = np.empty(len(table), dtype=np.dtype([("off", "<i4", (table.n,)), ("w", "<f8")]))
    body["off"] = table.offsets
    body["w"] = table.weights
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(ident)
        fh.write(body.tobytes())
    path.with_suffix(path.suffix + ".txt").write_text(table.summary_text())


def load_table(path: str | Path) -> InteractionTable:
    data = Path(path).read_bytes()
    fmt = "<4sIIBddddQH"
    size = struct.calcsize(fmt)
    magic, version, n, frac, s, a, radius, tail, count, id_len = struct.unpack(fmt, data[:size])
    if magic != _MAGIC:
        raise ValueError("not a kflow interaction table")
    if version != _VERSION:
        raise ValueError(f"unsupported table version {version}")
    ident = data[size : size + id_len].decode("utf-8")
    dtype = np.dtype([("off", "<i4", (n,)), ("w", "<f8")])
    body = np.frombuffer(data, dtype=dtype, count=count, offset=size + id_len)
    return InteractionTable(
        n=n,
        spacing=a,
        radius=radius,
        offsets=body["off"].astype(np.int64),
        weights=body["w"].copy(),
        tail=tail,
        kind="fractional" if frac else "compact",
        exponent=None if math.isnan(s) else s,
        profile_id=ident,
    )
