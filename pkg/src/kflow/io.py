"""Plain-text raster and table formats: PBM/PGM, run-length sets, CSV fields.

PBM/PGM rows follow the first array axis, columns the second; a PBM ``1``
marks a member cell.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import DiscreteSet, GridGeometry, ScalarField

__all__ = ["write_pbm", "read_pbm", "write_pgm", "write_rle", "read_rle", "write_field_csv"]


def write_pbm(s: DiscreteSet, path) -> None:
    if s.geometry.n != 2:
        raise ValueError("PBM export is for 2D sets; use write_rle")
    rows, cols = s.geometry.shape
    lines = ["P1", f"# spacing {s.geometry.spacing!r}", f"{cols} {rows}"]
    for row in s.mask.astype(np.uint8):
        lines.append(" ".join(str(int(b)) for b in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _tokens(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        out.extend(line.split())
    return out


def read_pbm(path, geometry: GridGeometry | None = None) -> DiscreteSet:
    """Read a plain (P1) bitmap; without ``geometry`` a unit-spacing box is used."""
    text = Path(path).read_text()
    tok = _tokens(text)
    if not tok or tok[0] != "P1":
        raise ValueError(f"{path}: not a plain PBM file")
    cols, rows = int(tok[1]), int(tok[2])
    bits = "".join(tok[3:])
    if len(bits) != rows * cols or set(bits) - {"0", "1"}:
        raise ValueError(f"{path}: bad PBM payload")
    mask = np.array([b == "1" for b in bits]).reshape(rows, cols)
    if geometry is None:
        geometry = GridGeometry((rows, cols))
    return DiscreteSet(geometry, mask)


def write_pgm(values: np.ndarray, path, lo: float | None = None, hi: float | None = None) -> None:
    """Grayscale heatmap of a 2D array; NaN cells are written black."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise ValueError("PGM export needs a 2D array")
    finite = np.isfinite(v)
    if lo is None:
        lo = float(v[finite].min()) if finite.any() else 0.0
    if hi is None:
        hi = float(v[finite].max()) if finite.any() else 1.0
    span = hi - lo if hi > lo else 1.0
    grey = np.zeros(v.shape, dtype=int)
    grey[finite] = np.clip(np.rint(255 * (v[finite] - lo) / span), 0, 255).astype(int)
    rows, cols = v.shape
    lines = ["P2", f"# range {lo!r} {hi!r}", f"{cols} {rows}", "255"]
    lines += [" ".join(str(x) for x in row) for row in grey]
    Path(path).write_text("\n".join(lines) + "\n")


def write_rle(s: DiscreteSet, path) -> None:
    """Run-length text: header line, then ``value count`` runs in C order."""
    g = s.geometry
    flat = s.mask.ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    lines = [f"kflow-rle shape={'x'.join(map(str, g.shape))} spacing={g.spacing!r}"]
    lines += [f"{int(flat[a])} {int(b - a)}" for a, b in zip(starts, ends)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_rle(path) -> DiscreteSet:
    lines = Path(path).read_text().splitlines()
    head = dict(part.split("=", 1) for part in lines[0].split()[1:])
    shape = tuple(int(x) for x in head["shape"].split("x"))
    g = GridGeometry(shape, float(head["spacing"]))
    bits = []
    for line in lines[1:]:
        if line.strip():
            val, count = line.split()
            bits.append(np.full(int(count), val == "1"))
    flat = np.concatenate(bits) if bits else np.zeros(0, bool)
    if flat.size != g.size:
        raise ValueError(f"{path}: run lengths do not cover the grid")
    return DiscreteSet(g, flat.reshape(shape))


def write_field_csv(field: ScalarField | np.ndarray, path, skip_nan: bool = True) -> None:
    """One row per cell: index columns then the value."""
    v = field.values if isinstance(field, ScalarField) else np.asarray(field, dtype=float)
    cols = [f"i{k}" for k in range(v.ndim)] + ["value"]
    lines = [",".join(cols)]
    for idx in np.ndindex(v.shape):
        x = float(v[idx])
        if skip_nan and np.isnan(x):
            continue
        lines.append(",".join([*map(str, idx), repr(x)]))
    Path(path).write_text("\n".join(lines) + "\n")
