"""Outward minimality certificates and mean-convexity reports.

A set E is outward minimizing in Omega when no A inside Omega (and away
from its outer ring) lowers ``Per_K(E u A, Omega)``; for such A this is the
same as lowering the global perimeter, so one min-cut with E pinned to the
foreground decides it.  The strong constant delta* is found by bisection
on a per-cell bonus ``-delta a^n`` for joining.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .energy import _check, curvature_field, nonlocal_perimeter
from .errors import PropertyViolation
from .grid import DiscreteSet, boundary_mask, dilate, dilation_escapes
from .kernel import InteractionTable
from .mincut import CutProblem, solve_min_cut

__all__ = [
    "MinimalityCertificate",
    "certify_outward_minimizing",
    "max_strong_delta",
    "ConvexityReport",
    "mean_convexity_report",
]


@dataclass
class MinimalityCertificate:
    minimizing: bool
    witness: DiscreteSet | None
    gain: float
    delta: float
    stats: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "minimizing" if self.minimizing else "not-minimizing"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "witness_cells": None if self.witness is None else self.witness.count,
            "gain": self.gain,
            "delta": self.delta,
            "stats": self.stats,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _omega_mask(E: DiscreteSet, omega) -> np.ndarray:
    if omega is None:
        return E.geometry.flexible
    return omega.mask if isinstance(omega, DiscreteSet) else np.asarray(omega, dtype=bool)


def _free_region(E: DiscreteSet, omega) -> np.ndarray:
    om = _omega_mask(E, omega)
    if om.shape != E.geometry.shape:
        raise ValueError("omega mask does not match the grid")
    if np.any(om & E.geometry.rim):
        raise ValueError("omega must stay clear of the box rim")
    ring = boundary_mask(DiscreteSet(E.geometry, om))
    return om & ~ring & ~E.mask


def _problem(E: DiscreteSet, free: np.ndarray, table: InteractionTable, delta: float) -> CutProblem:
    g = E.geometry
    unary = np.where(free, -delta * g.cell_volume, 0.0)
    return CutProblem(g, table, unary, E.mask.copy(), ~(E.mask | free))


def _gain(E: DiscreteSet, A: DiscreteSet, table: InteractionTable) -> float:
    return nonlocal_perimeter(E | A, table) - nonlocal_perimeter(E, table)


def _check_strict(E, witness, table, delta=0.0):
    gain = _gain(E, witness, table) - delta * witness.measure
    if not gain < 0:
        raise PropertyViolation(f"witness of {witness.count} cells does not lower the energy (gain {gain!r})")
    return gain


def certify_outward_minimizing(E: DiscreteSet, omega, table: InteractionTable) -> MinimalityCertificate:
    """Decide plain outward minimality of ``E`` in ``omega`` (mask or set)."""
    _check(E.geometry, table)
    free = _free_region(E, omega)
    res = solve_min_cut(_problem(E, free, table, 0.0))
    stats = dict(res.stats)
    if res.minimal == E:
        return MinimalityCertificate(True, None, 0.0, 0.0, stats)
    witness = res.maximal - E
    gain = _check_strict(E, witness, table)
    return MinimalityCertificate(False, witness, gain, 0.0, stats)


def _improves(E, free, table, delta):
    res = solve_min_cut(_problem(E, free, table, delta))
    if res.minimal == E:
        return None
    return res.maximal - E


def max_strong_delta(E: DiscreteSet, omega, table: InteractionTable, tol: float = 1e-3) -> float:
    """Largest delta (to ``tol``) with ``Per(E u A) - Per(E) >= delta |A|`` for all admissible A.

    Returns 0 if E is not even plainly minimizing.  The upper end starts at
    the best single-cell ratio and shrinks to the ratio of every witness found.
    """
    _check(E.geometry, table)
    free = _free_region(E, omega)
    if not free.any():
        raise ValueError("no admissible cells to add: omega lies inside the set")
    if _improves(E, free, table, 0.0) is not None:
        return 0.0
    vol = E.geometry.cell_volume
    # single-cell ratios bound delta* from above: adding p alone costs
    # W + tau a^n - 2 (w * chi_E)(p)
    conv = ndimage.correlate(E.mask.astype(float), table.stencil, mode="constant")
    single = table.total_weight + table.tail * vol - 2.0 * conv
    hi = float(single[free].min()) / vol
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        w = _improves(E, free, table, mid)
        if w is None:
            lo = mid
        else:
            hi = min(mid, _gain(E, w, table) / w.measure)
    return lo


@dataclass
class ConvexityReport:
    lambdas: np.ndarray
    min_curvature: np.ndarray
    focus_min: np.ndarray | None
    curv_tol: float
    xi: float
    plain: bool
    strong: bool
    strong_delta: float
    regular: bool
    c_fit: float
    blow_up: bool

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas.tolist(),
            "min_curvature": self.min_curvature.tolist(),
            "focus_min": None if self.focus_min is None else self.focus_min.tolist(),
            "curv_tol": self.curv_tol,
            "xi": self.xi,
            "plain": self.plain,
            "strong": self.strong,
            "strong_delta": self.strong_delta,
            "regular": self.regular,
            "c_fit": self.c_fit,
            "blow_up": self.blow_up,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _blow_up(lams: np.ndarray, mins: np.ndarray, tol: float) -> bool:
    """Whether the needed constant ``(-min - tol)/lambda`` keeps growing as lambda shrinks."""
    neg = (lams > 0) & (mins < -tol)
    if neg.sum() < 3:
        return False
    order = np.argsort(lams[neg])[::-1]
    need = ((-mins[neg] - tol) / lams[neg])[order]
    return bool(np.all(np.diff(need) > 0))


def mean_convexity_report(
    E: DiscreteSet,
    table: InteractionTable,
    lam_max: float,
    lam_count: int,
    xi: float | None = None,
    delta: float | None = None,
    curv_tol: float | None = None,
    focus=None,
) -> ConvexityReport:
    """Sample the minimum boundary curvature of ``E`` and of dilations ``E^lam``.

    Dilation radii are ``lam_count`` multiples of the spacing up to
    ``lam_max``.  ``focus`` is an optional cell mask; the minimum over
    boundary cells inside it is recorded separately (e.g. at a neck).
    Each verdict allows ``curv_tol`` of raster error: plain needs the minimum
    over the boundary of E to be at least ``-curv_tol``, strong needs every
    sampled minimum with ``lam <= xi`` to be at least ``delta - curv_tol``.
    Without ``delta`` the largest constant the samples support is used.
    """
    _check(E.geometry, table)
    a = E.geometry.spacing
    if lam_max < a:
        raise ValueError("lam_max must be at least one cell")
    if lam_count < 1:
        raise ValueError("need at least one dilation level")
    steps = np.unique(np.maximum(1, np.rint(np.linspace(lam_max / lam_count, lam_max, lam_count) / a)))
    lams = np.concatenate([[0.0], steps * a])
    if dilation_escapes(E, float(lams[-1])):
        raise ValueError(f"dilation by {lams[-1]} escapes the box")
    mins, fmins = [], []
    for lam in lams:
        D = E if lam == 0 else dilate(E, float(lam))
        f = curvature_field(D, table)
        mins.append(float(np.nanmin(f)))
        if focus is not None:
            sub = np.where(focus, f, np.nan)
            fmins.append(float(np.nanmin(sub)) if np.any(~np.isnan(sub)) else float("nan"))
    mins = np.array(mins)
    if curv_tol is None:
        curv_tol = table.max_weight / table.cell_volume
    xi = float(lams[-1]) if xi is None else float(xi)
    window = lams <= xi + 1e-12 * a
    fitted = float(mins[window].min())
    # every verdict allows the same raster tolerance; by default delta is
    # the largest constant the samples support
    strong_delta = fitted + curv_tol if delta is None else float(delta)
    strong = strong_delta > 0 and fitted >= strong_delta - curv_tol
    plain = bool(mins[0] >= -curv_tol)
    pos = lams > 0
    c_fit = float(max(0.0, np.max((-mins[pos] - curv_tol) / lams[pos]))) if pos.any() else 0.0
    blow = _blow_up(lams, mins, curv_tol)
    regular = plain and not blow
    return ConvexityReport(
        lambdas=lams,
        min_curvature=mins,
        focus_min=np.array(fmins) if focus is not None else None,
        curv_tol=float(curv_tol),
        xi=xi,
        plain=plain,
        strong=bool(strong),
        strong_delta=float(strong_delta if strong else 0.0),
        regular=bool(regular),
        c_fit=c_fit,
        blow_up=blow,
    )
