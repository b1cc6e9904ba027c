"""Minimizing movements: one step, the iterated flow, arrival times, level functions.

One step solves ``min_F Per_K(F) - (1/h) sum_{p in F} d_E(p) a^n`` exactly by
min-cut.  Cells outside the flexible region keep their current membership.
A set containing the whole box rim plays the role of an unbounded set and
is evolved through its complement, with the minimal and maximal branches
swapped.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import _check, min_boundary_curvature, nonlocal_perimeter
from .errors import DegenerateSetError, PropertyViolation
from .grid import DiscreteSet, ScalarField, set_distance, signed_distance
from .io import write_pbm
from .kernel import InteractionTable
from .mincut import CutProblem, CutResult, solve_min_cut

__all__ = [
    "step_problem",
    "atw_step",
    "FlowRecord",
    "FlowTrace",
    "run_flow",
    "arrival_time",
    "evolve_level_function",
    "NonExtinctionWarning",
]

MODES = ("minimal", "maximal")


class NonExtinctionWarning(UserWarning):
    """The flow was cut off before the set vanished."""


def _mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def step_problem(s: DiscreteSet, h: float, table: InteractionTable) -> CutProblem:
    """The cut problem of one step from a bounded set."""
    if not h > 0:
        raise ValueError(f"time step must be positive, got {h}")
    g = s.geometry
    _check(g, table)
    unary = -(1.0 / h) * signed_distance(s).values * g.cell_volume
    flex = g.flexible
    return CutProblem(g, table, unary, s.mask & ~flex, ~s.mask & ~flex)


def _solve(s: DiscreteSet, h: float, table: InteractionTable) -> CutResult:
    return solve_min_cut(step_problem(s, h, table))


def atw_step(s: DiscreteSet, h: float, table: InteractionTable, mode: str = "minimal") -> DiscreteSet:
    """``T_h^-(E)`` (``mode='minimal'``) or ``T_h^+(E)`` (``'maximal'``)."""
    _mode(mode)
    if not h > 0:
        raise ValueError(f"time step must be positive, got {h}")
    _check(s.geometry, table)
    if s.is_empty:
        return s
    if s.contains_rim():
        other = "maximal" if mode == "minimal" else "minimal"
        return ~atw_step(~s, h, table, other)
    res = _solve(s, h, table)
    return res.minimal if mode == "minimal" else res.maximal


@dataclass
class FlowRecord:
    k: int
    t: float
    set: DiscreteSet
    perimeter: float
    measure: float
    distance: float
    min_curvature: float


@dataclass
class FlowTrace:
    h: float
    mode: str
    records: list[FlowRecord] = field(default_factory=list)
    termination: str = ""
    table_label: str = ""

    def __len__(self) -> int:
        return len(self.records)

    @property
    def sets(self) -> list[DiscreteSet]:
        return [r.set for r in self.records]

    @property
    def extinct(self) -> bool:
        return self.termination == "extinction"

    def at_time(self, t: float) -> DiscreteSet:
        """``E_h(t) = E_k`` with ``k = floor(t / h)``; empty after extinction."""
        if t < 0:
            raise ValueError("time must be nonnegative")
        k = int(math.floor(t / self.h + 1e-12))
        if k < len(self.records):
            return self.records[k].set
        if self.extinct:
            return self.records[-1].set.geometry.empty()
        raise ValueError(f"time {t} is past the end of a non-extinct trace")

    def integrated_perimeter(self) -> float:
        return float(sum(self.h * r.perimeter for r in self.records))

    def summary_rows(self) -> list[dict]:
        return [
            {
                "k": r.k,
                "t": repr(r.t),
                "perimeter": repr(r.perimeter),
                "measure": repr(r.measure),
                "distance": repr(r.distance),
                "min_curvature": repr(r.min_curvature),
            }
            for r in self.records
        ]

    def write_csv(self, path) -> None:
        rows = self.summary_rows()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["k"], lineterminator="\n")
            w.writeheader()
            w.writerows(rows)

    def write_snapshots(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        out = []
        for r in self.records:
            p = directory / f"step_{r.k:05d}.pbm"
            write_pbm(r.set, p)
            out.append(p)
        return out

    def manifest(self) -> dict:
        g = self.records[0].set.geometry if self.records else None
        return {
            "h": self.h,
            "mode": self.mode,
            "steps": len(self.records),
            "termination": self.termination,
            "kernel": self.table_label,
            "grid": None if g is None else {"shape": list(g.shape), "spacing": g.spacing},
            "integrated_perimeter": self.integrated_perimeter(),
        }

    def write_manifest(self, path) -> None:
        Path(path).write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")


def _distance(a: DiscreteSet, b: DiscreteSet) -> float:
    try:
        return set_distance(a, b)
    except DegenerateSetError:
        return float("nan")


def _record(k, h, s, prev, table) -> FlowRecord:
    return FlowRecord(
        k=k,
        t=k * h,
        set=s,
        perimeter=nonlocal_perimeter(s, table),
        measure=s.measure,
        distance=float("nan") if prev is None else _distance(s, prev),
        min_curvature=min_boundary_curvature(s, table) if not s.is_empty else float("nan"),
    )


def run_flow(
    s: DiscreteSet,
    h: float,
    t_max: float,
    table: InteractionTable,
    mode: str = "minimal",
    max_steps: int | None = None,
) -> FlowTrace:
    """Iterate the step from ``E_0 = E`` while ``t_k <= t_max``.

    Stops on extinction, on reaching ``t_max`` (or ``max_steps``), or when the
    set has not changed for two consecutive steps.
    """
    _mode(mode)
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    trace = FlowTrace(h=h, mode=mode, table_label=table.label)
    cur = s
    trace.records.append(_record(0, h, cur, None, table))
    unchanged = 0
    k = 0
    while True:
        if cur.is_empty:
            trace.termination = "extinction"
            break
        if unchanged >= 2:
            trace.termination = "stagnation"
            break
        if (k + 1) * h > t_max * (1 + 1e-12) or (max_steps is not None and k >= max_steps):
            trace.termination = "max_time"
            break
        nxt = atw_step(cur, h, table, mode)
        k += 1
        unchanged = unchanged + 1 if nxt == cur else 0
        trace.records.append(_record(k, h, nxt, cur, table))
        cur = nxt
    return trace


def arrival_time(trace_or_set, h: float | None = None, table: InteractionTable | None = None,
                 mode: str = "minimal", t_max: float | None = None) -> ScalarField:
    """``u_h(p) = h * #{k >= 0 : p in E_k}``.

    Accepts a finished :class:`FlowTrace`, or a set plus ``h`` and ``table``
    (the flow is then run up to ``t_max``, by default a bound from the box size).
    """
    if isinstance(trace_or_set, FlowTrace):
        trace = trace_or_set
    else:
        if h is None or table is None:
            raise ValueError("need h and table to run the flow")
        if t_max is None:
            t_max = h * (trace_or_set.geometry.size + 2)
        trace = run_flow(trace_or_set, h, t_max, table, mode)
    g = trace.records[0].set.geometry
    counts = np.zeros(g.shape)
    for r in trace.records:
        counts += r.set.mask
    nested = all(b.set <= a.set for a, b in zip(trace.records, trace.records[1:]))
    if not trace.extinct:
        warnings.warn(
            f"flow stopped by {trace.termination} before extinction; arrival times are truncated",
            NonExtinctionWarning,
            stacklevel=2,
        )
    info = {"h": trace.h, "steps": len(trace), "termination": trace.termination, "nested": nested}
    return ScalarField(g, trace.h * counts, info)


def _quantize(u: np.ndarray, quantum: float | None) -> tuple[np.ndarray, float | None]:
    if quantum is None:
        return u, None
    if not quantum > 0:
        raise ValueError("quantum must be positive")
    return np.floor(u / quantum) * quantum, quantum


def evolve_level_function(
    u0: ScalarField, h: float, steps: int, table: InteractionTable, quantum: float | None = None
) -> ScalarField:
    """Level-set form of the scheme with the minimal step.

    With attained values ``l_0 < ... < l_m``, each strict superlevel set
    ``U_i = {u > l_i}`` is stepped; ``(T u)(x) = l_{i+1}`` for the largest
    ``i`` with ``x in T^-(U_i)`` and ``l_0`` where no stepped level contains ``x``.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    g = u0.geometry
    values, q = _quantize(np.asarray(u0.values, dtype=float), quantum)
    for _ in range(steps):
        levels = np.unique(values)
        out = np.full(g.shape, levels[0])
        prev = None
        for i in range(len(levels) - 1):
            stepped = atw_step(DiscreteSet(g, values > levels[i]), h, table, "minimal")
            if prev is not None and not stepped <= prev:
                raise PropertyViolation(f"stepped level sets lost nesting at level {levels[i]!r}")
            out[stepped.mask] = levels[i + 1]
            prev = stepped
        values = out
    info = dict(u0.info)
    info.update({"h": h, "steps": steps, "quantum": q})
    return ScalarField(g, values, info)
